#ifndef COMPANDER_NN_HPP
#define COMPANDER_NN_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "compander/autodiff.hpp"
#include "compander/rng.hpp"
#include "compander/tensor.hpp"

namespace compander {

enum class LayerKind { Linear, Conv2d, BatchNorm2d, ReLU, Flatten, SoftmaxCrossEntropy };

struct LayerSpec {
  LayerKind kind;
  std::size_t in = 0, out = 0;                                        // Linear
  std::size_t in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0; // Conv2d
  std::size_t channels = 0;                                           // BatchNorm2d
  double eps = 1e-5;
  double momentum = 0.1;
  bool has_bias = true;

  static LayerSpec linear(std::size_t in, std::size_t out, bool has_bias = true) {
    if (in == 0 || out == 0) throw std::invalid_argument("linear: zero-sized layer");
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.in = in;
    s.out = out;
    s.has_bias = has_bias;
    return s;
  }
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                          std::size_t stride = 1, std::size_t pad = 0, bool has_bias = true) {
    if (in_ch == 0 || out_ch == 0) throw std::invalid_argument("conv2d: zero channels");
    if (kernel < 1) throw std::invalid_argument("conv2d: kernel must be >= 1");
    if (kernel > 7) throw std::invalid_argument("conv2d: kernels above 7 are out of envelope");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    s.has_bias = has_bias;
    return s;
  }
  static LayerSpec batchnorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.1) {
    if (channels == 0) throw std::invalid_argument("batchnorm2d: zero channels");
    if (!(eps > 0)) throw std::invalid_argument("batchnorm2d: eps must be > 0");
    LayerSpec s;
    s.kind = LayerKind::BatchNorm2d;
    s.channels = channels;
    s.eps = eps;
    s.momentum = momentum;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{.kind = LayerKind::ReLU}; }
  static LayerSpec flatten() { return LayerSpec{.kind = LayerKind::Flatten}; }
  static LayerSpec softmax_cross_entropy() {
    return LayerSpec{.kind = LayerKind::SoftmaxCrossEntropy};
  }
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm2d: return "batchnorm2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

enum class ParamRole { Weight, Bias, BnScale, BnShift };

struct ParamInfo {
  std::string name;
  std::size_t layer = 0;
  ParamRole role = ParamRole::Weight;
  Shape shape;
  std::size_t fan_in = 1;
};

/// std for He-style normal init on fan-in n. The conventional value is
/// sqrt(2/n); the literal 2/n variant is exposed behind a flag.
inline double he_normal_std(std::size_t n, bool literal_two_over_n = false) {
  if (n == 0) throw std::invalid_argument("he_normal_std: fan_in must be >= 1");
  return literal_two_over_n ? 2.0 / double(n) : std::sqrt(2.0 / double(n));
}

inline Tensor<double> kaiming_uniform_init(const Shape& shape, std::size_t fan_in, StreamRng& rng) {
  if (fan_in == 0) throw std::invalid_argument("kaiming_uniform_init: fan_in must be >= 1");
  double bound = std::sqrt(6.0 / double(fan_in));
  Tensor<double> t(shape);
  for (auto& x : t) x = rng.uniform(-bound, bound);
  return t;
}

inline Tensor<double> kaiming_uniform_init(const Shape& shape, std::size_t fan_in,
                                           std::uint64_t seed) {
  StreamRng rng(seed, StreamRng::kInit, 0);
  return kaiming_uniform_init(shape, fan_in, rng);
}

inline Tensor<double> gaussian_init(const Shape& shape, double std_dev, StreamRng& rng) {
  if (!(std_dev > 0)) throw std::invalid_argument("gaussian_init: std must be > 0");
  Tensor<double> t(shape);
  for (auto& x : t) x = rng.normal(0.0, std_dev);
  return t;
}

inline Tensor<double> gaussian_init(const Shape& shape, double std_dev, std::uint64_t seed) {
  StreamRng rng(seed, StreamRng::kInit, 0);
  return gaussian_init(shape, std_dev, rng);
}

enum class InitScheme { KaimingUniform, HeNormal };

/// A sequential network: layer list, parameter storage, BN buffers, and
/// tape-building forward/backward. Parameter order is layer order with
/// weight before bias (gamma before beta).
class Model {
 public:
  Model(std::vector<LayerSpec> layers, Shape input_shape)
      : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
    if (layers_.empty()) throw std::invalid_argument("model: no layers");
    build();
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  bool has_loss_layer() const { return loss_layer_; }

  const std::vector<ParamInfo>& param_infos() const { return infos_; }
  std::vector<Tensor<double>>& params() { return params_; }
  const std::vector<Tensor<double>>& params() const { return params_; }

  std::map<std::size_t, BnBuffers>& bn_buffers() { return bn_; }
  const std::map<std::size_t, BnBuffers>& bn_buffers() const { return bn_; }

  std::size_t param_index(const std::string& name) const {
    for (std::size_t i = 0; i < infos_.size(); ++i)
      if (infos_[i].name == name) return i;
    throw std::invalid_argument("model: no parameter named " + name);
  }

  /// Weights from the scheme's law on their fan-in; biases zero; BN
  /// scale one, shift zero. Each parameter draws from its own stream of
  /// the seed, so layer count changes do not shift sibling draws.
  void init_params(std::uint64_t seed, InitScheme scheme = InitScheme::KaimingUniform,
                   bool literal_two_over_n = false) {
    for (std::size_t i = 0; i < infos_.size(); ++i) {
      const ParamInfo& info = infos_[i];
      switch (info.role) {
        case ParamRole::Weight: {
          StreamRng rng(seed, StreamRng::kInit, i);
          params_[i] = scheme == InitScheme::KaimingUniform
                           ? kaiming_uniform_init(info.shape, info.fan_in, rng)
                           : gaussian_init(info.shape, he_normal_std(info.fan_in,
                                                                     literal_two_over_n),
                                           rng);
          break;
        }
        case ParamRole::Bias:
        case ParamRole::BnShift:
          params_[i].fill(0.0);
          break;
        case ParamRole::BnScale:
          params_[i].fill(1.0);
          break;
      }
    }
    for (auto& [layer, buf] : bn_) {
      buf.running_mean.fill(0.0);
      buf.running_var.fill(1.0);
    }
  }

  /// Optional in-graph L2 term lambda * sum over slots of ||w||^2,
  /// added to the loss node so decay flows through the tape.
  struct L2Penalty {
    double lambda = 0.0;
    std::vector<std::size_t> slots;
  };

  struct ForwardResult {
    GradTape tape;
    Var output;                  // loss (incl. penalty) if labels were given
    Var logits;                  // last pre-loss activation
    Var data_loss;               // loss without the penalty term
    std::vector<Var> param_vars; // aligned with params()
    bool loss_computed = false;
  };

  /// Runs the network on a batch. labels may be null to stop before the
  /// loss layer. weights_override substitutes parameter values (same
  /// shapes) without touching stored params; used for companded weights.
  ForwardResult forward(const Tensor<double>& input, const std::vector<std::size_t>* labels,
                        bool training,
                        const std::vector<Tensor<double>>* weights_override = nullptr,
                        const L2Penalty* penalty = nullptr) {
    if (input.ndim() != input_shape_.size() + 1)
      throw std::invalid_argument("model: input must be batched " + shape_str(input_shape_) +
                                  ", got " + shape_str(input.shape()));
    for (std::size_t d = 0; d < input_shape_.size(); ++d)
      if (input.dim(d + 1) != input_shape_[d])
        throw std::invalid_argument("model: input shape " + shape_str(input.shape()) +
                                    " does not match expected " + shape_str(input_shape_));
    const auto& source = weights_override ? *weights_override : params_;
    if (source.size() != params_.size())
      throw std::invalid_argument("model: weight override count mismatch");

    ForwardResult r;
    std::vector<Var> pv;
    pv.reserve(source.size());
    for (const auto& p : source) pv.push_back(r.tape.leaf(p));
    r.param_vars = pv;

    // penalty subgraph goes on the tape before the network ops, so its
    // backward contribution lands after the data gradients, matching
    // the order used when decay is injected outside the tape
    bool with_penalty = penalty && penalty->lambda > 0 && labels && loss_layer_;
    Var pen_node{};
    if (with_penalty) {
      if (penalty->slots.empty()) throw std::invalid_argument("model: penalty without slots");
      bool first = true;
      Var acc{};
      for (std::size_t slot : penalty->slots) {
        if (slot >= pv.size()) throw std::invalid_argument("model: penalty slot out of range");
        Var sq = r.tape.sum(r.tape.mul(pv[slot], pv[slot]));
        acc = first ? sq : r.tape.add(acc, sq);
        first = false;
      }
      pen_node = r.tape.scale(acc, penalty->lambda);
    }

    Var cur = r.tape.leaf(input);
    std::size_t pi = 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const LayerSpec& spec = layers_[li];
      std::string where = "L" + std::to_string(li) + " (" + layer_kind_name(spec.kind) + ")";
      switch (spec.kind) {
        case LayerKind::Linear: {
          Var w = pv[pi++];
          Var b = spec.has_bias ? pv[pi++] : Var{};
          cur = r.tape.linear(cur, w, b, spec.has_bias, where);
          break;
        }
        case LayerKind::Conv2d: {
          Var w = pv[pi++];
          Var b = spec.has_bias ? pv[pi++] : Var{};
          cur = r.tape.conv2d(cur, w, b, spec.stride, spec.pad, spec.has_bias, where);
          break;
        }
        case LayerKind::BatchNorm2d: {
          Var g = pv[pi++];
          Var b = pv[pi++];
          cur = r.tape.batchnorm2d(cur, g, b, &bn_.at(li), spec.eps, spec.momentum, training,
                                   where);
          break;
        }
        case LayerKind::ReLU:
          cur = r.tape.relu(cur);
          break;
        case LayerKind::Flatten:
          cur = r.tape.flatten(cur);
          break;
        case LayerKind::SoftmaxCrossEntropy: {
          r.logits = cur;
          if (!labels) {
            r.output = cur;
            return r;
          }
          cur = r.tape.softmax_cross_entropy(cur, *labels, where);
          r.data_loss = cur;
          if (with_penalty) cur = r.tape.add(cur, pen_node);
          r.output = cur;
          r.loss_computed = true;
          return r;
        }
      }
    }
    r.logits = cur;
    r.output = cur;
    r.data_loss = cur;
    return r;
  }

  /// Gradients of the forward's scalar output for every parameter,
  /// aligned with params().
  std::vector<Tensor<double>> backward(ForwardResult& f) {
    f.tape.backward(f.output);
    std::vector<Tensor<double>> grads;
    grads.reserve(f.param_vars.size());
    for (Var v : f.param_vars) grads.push_back(f.tape.grad(v));
    return grads;
  }

 private:
  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<ParamInfo> infos_;
  std::vector<Tensor<double>> params_;
  std::map<std::size_t, BnBuffers> bn_;
  bool loss_layer_ = false;

  void add_param(std::size_t layer, ParamRole role, const char* suffix, Shape shape,
                 std::size_t fan_in) {
    ParamInfo info;
    info.name = "L" + std::to_string(layer) + "." + suffix;
    info.layer = layer;
    info.role = role;
    info.shape = shape;
    info.fan_in = fan_in;
    infos_.push_back(std::move(info));
    params_.emplace_back(std::move(shape));
  }

  void build() {
    Shape cur = input_shape_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const LayerSpec& s = layers_[li];
      std::string where = "L" + std::to_string(li) + " (" + layer_kind_name(s.kind) + ")";
      if (loss_layer_) throw std::invalid_argument(where + ": layers after the loss layer");
      switch (s.kind) {
        case LayerKind::Linear: {
          if (cur.size() != 1 || cur[0] != s.in)
            throw std::invalid_argument(where + ": expects " + std::to_string(s.in) +
                                        " features, input is " + shape_str(cur));
          add_param(li, ParamRole::Weight, "weight", {s.out, s.in}, s.in);
          if (s.has_bias) add_param(li, ParamRole::Bias, "bias", {s.out}, s.in);
          cur = {s.out};
          break;
        }
        case LayerKind::Conv2d: {
          if (cur.size() != 3 || cur[0] != s.in_ch)
            throw std::invalid_argument(where + ": expects [" + std::to_string(s.in_ch) +
                                        ",h,w], input is " + shape_str(cur));
          std::size_t h = cur[1], w = cur[2];
          if (h > 64 || w > 64)
            throw std::invalid_argument(where + ": images above 64x64 are out of envelope");
          if (h + 2 * s.pad < s.kernel || w + 2 * s.pad < s.kernel)
            throw std::invalid_argument(where + ": kernel does not fit padded input " +
                                        shape_str(cur));
          std::size_t fan = s.in_ch * s.kernel * s.kernel;
          add_param(li, ParamRole::Weight, "weight", {s.out_ch, s.in_ch, s.kernel, s.kernel}, fan);
          if (s.has_bias) add_param(li, ParamRole::Bias, "bias", {s.out_ch}, fan);
          cur = {s.out_ch, (h + 2 * s.pad - s.kernel) / s.stride + 1,
                 (w + 2 * s.pad - s.kernel) / s.stride + 1};
          break;
        }
        case LayerKind::BatchNorm2d: {
          if (cur.size() != 3 || cur[0] != s.channels)
            throw std::invalid_argument(where + ": expects [" + std::to_string(s.channels) +
                                        ",h,w], input is " + shape_str(cur));
          add_param(li, ParamRole::BnScale, "gamma", {s.channels}, s.channels);
          add_param(li, ParamRole::BnShift, "beta", {s.channels}, s.channels);
          bn_.emplace(li, BnBuffers(s.channels));
          break;
        }
        case LayerKind::ReLU:
          break;
        case LayerKind::Flatten: {
          if (cur.size() < 2)
            throw std::invalid_argument(where + ": input already flat: " + shape_str(cur));
          cur = {shape_numel(cur)};
          break;
        }
        case LayerKind::SoftmaxCrossEntropy: {
          if (cur.size() != 1)
            throw std::invalid_argument(where + ": needs flat logits, input is " + shape_str(cur));
          loss_layer_ = true;
          break;
        }
      }
    }
    output_shape_ = cur;
  }
};

/// The two reference architectures used by the experiment harness.
inline std::vector<LayerSpec> mlp_layers(std::size_t in = 784, std::size_t hidden = 256,
                                         std::size_t classes = 10) {
  return {LayerSpec::linear(in, hidden), LayerSpec::relu(), LayerSpec::linear(hidden, classes),
          LayerSpec::softmax_cross_entropy()};
}

/// Small CNN for 1-channel images: two stride-2 convs with BN stand in
/// for conv+pool blocks at desk scale.
inline std::vector<LayerSpec> small_cnn_layers(std::size_t in_ch = 1, std::size_t img = 28,
                                               std::size_t classes = 10) {
  std::size_t h1 = (img + 2 - 3) / 2 + 1;
  std::size_t h2 = (h1 + 2 - 3) / 2 + 1;
  return {LayerSpec::conv2d(in_ch, 8, 3, 2, 1),
          LayerSpec::batchnorm2d(8),
          LayerSpec::relu(),
          LayerSpec::conv2d(8, 16, 3, 2, 1),
          LayerSpec::batchnorm2d(16),
          LayerSpec::relu(),
          LayerSpec::flatten(),
          LayerSpec::linear(16 * h2 * h2, classes),
          LayerSpec::softmax_cross_entropy()};
}

}  // namespace compander

#endif  // COMPANDER_NN_HPP
