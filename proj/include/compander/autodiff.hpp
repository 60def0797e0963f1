#ifndef COMPANDER_AUTODIFF_HPP
#define COMPANDER_AUTODIFF_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "compander/tensor.hpp"

namespace compander {

/// Handle to a node on a GradTape.
struct Var {
  std::size_t id = 0;
};

/// Running statistics owned by a BatchNorm2d layer, updated during
/// training-mode forward passes and consumed in eval mode.
struct BnBuffers {
  Tensor<double> running_mean;
  Tensor<double> running_var;

  explicit BnBuffers(std::size_t channels)
      : running_mean({channels}), running_var(Tensor<double>::full({channels}, 1.0)) {}
};

/// Reverse-mode tape. Nodes are recorded in creation order, which is a
/// topological order; backward walks ids downward over the subgraph
/// reachable from the loss, visiting each node once.
class GradTape {
  enum class Op {
    Leaf,
    Add,
    Mul,
    Scale,
    Sum,
    Relu,
    Linear,
    Conv2d,
    BatchNorm2d,
    Flatten,
    SoftmaxCrossEntropy,
  };

  struct ConvAux {
    std::size_t in_ch, out_ch, kernel, stride, pad;
    std::size_t h, w, oh, ow;
    bool has_bias;
  };

  struct BnAux {
    std::vector<double> x_hat;     // normalized pre-affine activations
    std::vector<double> inv_std;   // per channel
    std::size_t channels, per_channel;
  };

  struct SceAux {
    std::vector<double> probs;     // softmax, row-major [n, classes]
    std::vector<std::size_t> labels;
  };

  struct Node {
    Op op;
    Tensor<double> value;
    Tensor<double> grad;
    std::size_t parents[3] = {0, 0, 0};
    std::size_t n_parents = 0;
    double factor = 1.0;  // Scale
    std::variant<std::monostate, ConvAux, BnAux, SceAux> aux;
  };

 public:
  Var leaf(Tensor<double> value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
  }

  const Tensor<double>& value(Var v) const { return node(v).value; }

  /// Gradient of the last backward()'s loss w.r.t. node v.
  const Tensor<double>& grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) throw std::logic_error("grad unavailable; run backward first");
    return n.grad;
  }

  Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    Node n;
    n.op = Op::Add;
    n.value = Tensor<double>(node(a).value.shape());
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] + y[i];
    set_parents(n, a, b);
    return push(std::move(n));
  }

  Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    Node n;
    n.op = Op::Mul;
    n.value = Tensor<double>(node(a).value.shape());
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * y[i];
    set_parents(n, a, b);
    return push(std::move(n));
  }

  Var scale(Var a, double c) {
    Node n;
    n.op = Op::Scale;
    n.factor = c;
    n.value = Tensor<double>(node(a).value.shape());
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = c * x[i];
    set_parents(n, a);
    return push(std::move(n));
  }

  Var sum(Var a) {
    Node n;
    n.op = Op::Sum;
    double s = 0;
    for (double x : node(a).value) s += x;
    n.value = Tensor<double>::scalar(s);
    set_parents(n, a);
    return push(std::move(n));
  }

  Var relu(Var a) {
    Node n;
    n.op = Op::Relu;
    n.value = Tensor<double>(node(a).value.shape());
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > 0 ? x[i] : 0.0;
    set_parents(n, a);
    return push(std::move(n));
  }

  /// y = x W^T + b with x [n, in], w [out, in], b [out].
  Var linear(Var xv, Var wv, Var bv, bool has_bias, const std::string& where) {
    const auto& x = node(xv).value;
    const auto& w = node(wv).value;
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
      throw std::invalid_argument(where + ": linear expects x [n,in] and w [out,in], got x " +
                                  shape_str(x.shape()) + " w " + shape_str(w.shape()));
    std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
    Node nd;
    nd.op = Op::Linear;
    nd.value = Tensor<double>({n, out});
    auto& y = nd.value;
    if (has_bias && node(bv).value.size() != out)
      throw std::invalid_argument(where + ": bias size " + std::to_string(node(bv).value.size()) +
                                  " for " + std::to_string(out) + " outputs");
    for (std::size_t i = 0; i < n; ++i) {
      const double* xrow = x.data() + i * in;
      double* yrow = y.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wrow = w.data() + o * in;
        double acc = has_bias ? node(bv).value[o] : 0.0;
        for (std::size_t k = 0; k < in; ++k) acc += xrow[k] * wrow[k];
        yrow[o] = acc;
      }
    }
    if (has_bias)
      set_parents(nd, xv, wv, bv);
    else
      set_parents(nd, xv, wv);
    return push(std::move(nd));
  }

  /// x [n, c, h, w], weight [oc, c, k, k], bias [oc].
  Var conv2d(Var xv, Var wv, Var bv, std::size_t stride, std::size_t pad, bool has_bias,
             const std::string& where) {
    const auto& x = node(xv).value;
    const auto& w = node(wv).value;
    if (x.ndim() != 4 || w.ndim() != 4 || w.dim(2) != w.dim(3) || x.dim(1) != w.dim(1))
      throw std::invalid_argument(where + ": conv2d expects x [n,c,h,w], w [oc,c,k,k], got x " +
                                  shape_str(x.shape()) + " w " + shape_str(w.shape()));
    ConvAux cv;
    cv.in_ch = x.dim(1);
    cv.out_ch = w.dim(0);
    cv.kernel = w.dim(2);
    cv.stride = stride;
    cv.pad = pad;
    cv.h = x.dim(2);
    cv.w = x.dim(3);
    cv.has_bias = has_bias;
    if (cv.h + 2 * pad < cv.kernel || cv.w + 2 * pad < cv.kernel)
      throw std::invalid_argument(where + ": kernel " + std::to_string(cv.kernel) +
                                  " exceeds padded input " + shape_str(x.shape()));
    cv.oh = (cv.h + 2 * pad - cv.kernel) / stride + 1;
    cv.ow = (cv.w + 2 * pad - cv.kernel) / stride + 1;
    std::size_t n = x.dim(0);

    Node nd;
    nd.op = Op::Conv2d;
    nd.value = Tensor<double>({n, cv.out_ch, cv.oh, cv.ow});
    auto& y = nd.value;
    std::size_t patch = cv.in_ch * cv.kernel * cv.kernel;
    std::vector<double> col(patch * cv.oh * cv.ow);
    for (std::size_t img = 0; img < n; ++img) {
      im2col(x.data() + img * cv.in_ch * cv.h * cv.w, cv, col.data());
      double* yimg = y.data() + img * cv.out_ch * cv.oh * cv.ow;
      std::size_t spatial = cv.oh * cv.ow;
      for (std::size_t oc = 0; oc < cv.out_ch; ++oc) {
        double* yrow = yimg + oc * spatial;
        double bias = has_bias ? node(bv).value[oc] : 0.0;
        for (std::size_t s = 0; s < spatial; ++s) yrow[s] = bias;
        const double* wrow = w.data() + oc * patch;
        for (std::size_t p = 0; p < patch; ++p) {
          double wv_ = wrow[p];
          if (wv_ == 0.0) continue;
          const double* crow = col.data() + p * spatial;
          for (std::size_t s = 0; s < spatial; ++s) yrow[s] += wv_ * crow[s];
        }
      }
    }
    nd.aux = cv;
    if (has_bias)
      set_parents(nd, xv, wv, bv);
    else
      set_parents(nd, xv, wv);
    return push(std::move(nd));
  }

  /// x [n, c, h, w]; gamma, beta [c]. Normalizes with the biased batch
  /// variance; running stats follow the convention
  /// running = (1 - momentum) * running + momentum * batch, with the
  /// unbiased variance entering the running buffer.
  Var batchnorm2d(Var xv, Var gv, Var bv, BnBuffers* buffers, double eps, double momentum,
                  bool training, const std::string& where) {
    const auto& x = node(xv).value;
    if (x.ndim() != 4)
      throw std::invalid_argument(where + ": batchnorm2d expects x [n,c,h,w], got " +
                                  shape_str(x.shape()));
    std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (node(gv).value.size() != c || node(bv).value.size() != c)
      throw std::invalid_argument(where + ": gamma/beta size mismatch for " + std::to_string(c) +
                                  " channels");
    BnAux aux;
    aux.channels = c;
    aux.per_channel = n * hw;
    aux.x_hat.resize(x.size());
    aux.inv_std.resize(c);

    Node nd;
    nd.op = Op::BatchNorm2d;
    nd.value = Tensor<double>(x.shape());
    const auto& gamma = node(gv).value;
    const auto& beta = node(bv).value;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean, var;
      if (training) {
        double s = 0;
        for (std::size_t img = 0; img < n; ++img) {
          const double* p = x.data() + (img * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
        }
        mean = s / double(aux.per_channel);
        double sq = 0;
        for (std::size_t img = 0; img < n; ++img) {
          const double* p = x.data() + (img * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            double d = p[i] - mean;
            sq += d * d;
          }
        }
        var = sq / double(aux.per_channel);
        if (buffers) {
          double unbiased = aux.per_channel > 1 ? sq / double(aux.per_channel - 1) : var;
          buffers->running_mean[ch] = (1 - momentum) * buffers->running_mean[ch] + momentum * mean;
          buffers->running_var[ch] = (1 - momentum) * buffers->running_var[ch] + momentum * unbiased;
        }
      } else {
        if (!buffers) throw std::invalid_argument(where + ": eval mode needs running stats");
        mean = buffers->running_mean[ch];
        var = buffers->running_var[ch];
      }
      double inv = 1.0 / std::sqrt(var + eps);
      aux.inv_std[ch] = inv;
      for (std::size_t img = 0; img < n; ++img) {
        std::size_t base = (img * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          double xh = (x[base + i] - mean) * inv;
          aux.x_hat[base + i] = xh;
          nd.value[base + i] = gamma[ch] * xh + beta[ch];
        }
      }
    }
    nd.aux = std::move(aux);
    set_parents(nd, xv, gv, bv);
    return push(std::move(nd));
  }

  /// [n, ...] -> [n, rest].
  Var flatten(Var a) {
    const auto& x = node(a).value;
    if (x.ndim() < 2) throw std::invalid_argument("flatten expects a batched tensor");
    Node n;
    n.op = Op::Flatten;
    n.value = x.reshaped({x.dim(0), x.size() / x.dim(0)});
    set_parents(n, a);
    return push(std::move(n));
  }

  /// logits [n, classes]; mean cross-entropy over the batch via
  /// max-subtracted log-sum-exp.
  Var softmax_cross_entropy(Var zv, std::vector<std::size_t> labels, const std::string& where) {
    const auto& z = node(zv).value;
    if (z.ndim() != 2)
      throw std::invalid_argument(where + ": logits must be [n, classes], got " +
                                  shape_str(z.shape()));
    std::size_t n = z.dim(0), classes = z.dim(1);
    if (labels.size() != n)
      throw std::invalid_argument(where + ": " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(n) + " rows");
    SceAux aux;
    aux.probs.resize(z.size());
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= classes)
        throw std::invalid_argument(where + ": label " + std::to_string(labels[i]) +
                                    " out of range for " + std::to_string(classes) + " classes");
      const double* row = z.data() + i * classes;
      double mx = row[0];
      for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
      double se = 0;
      for (std::size_t j = 0; j < classes; ++j) se += std::exp(row[j] - mx);
      double lse = mx + std::log(se);
      loss += lse - row[labels[i]];
      for (std::size_t j = 0; j < classes; ++j) aux.probs[i * classes + j] = std::exp(row[j] - lse);
    }
    aux.labels = std::move(labels);
    Node nd;
    nd.op = Op::SoftmaxCrossEntropy;
    nd.value = Tensor<double>::scalar(loss / double(n));
    nd.aux = std::move(aux);
    set_parents(nd, zv);
    return push(std::move(nd));
  }

  /// Accumulates dloss/dnode into every node reachable from loss.
  void backward(Var loss) {
    Node& top = node_mut(loss);
    if (top.value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(top.value.shape()));
    std::vector<char> reachable(nodes_.size(), 0);
    mark_reachable(loss.id, reachable);
    for (auto& n : nodes_) {
      n.grad = Tensor<double>(n.value.shape());
    }
    top.grad[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      if (!reachable[id]) continue;
      step_backward(id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;

  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Node& node(Var v) const { return nodes_.at(v.id); }
  Node& node_mut(Var v) { return nodes_.at(v.id); }

  void set_parents(Node& n, Var a) {
    n.parents[0] = a.id;
    n.n_parents = 1;
  }
  void set_parents(Node& n, Var a, Var b) {
    n.parents[0] = a.id;
    n.parents[1] = b.id;
    n.n_parents = 2;
  }
  void set_parents(Node& n, Var a, Var b, Var c) {
    n.parents[0] = a.id;
    n.parents[1] = b.id;
    n.parents[2] = c.id;
    n.n_parents = 3;
  }

  void require_same_shape(const char* op, Var a, Var b) const {
    if (!node(a).value.same_shape(node(b).value))
      throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                  shape_str(node(a).value.shape()) + " vs " +
                                  shape_str(node(b).value.shape()));
  }

  void mark_reachable(std::size_t root, std::vector<char>& seen) const {
    std::vector<std::size_t> stack{root};
    while (!stack.empty()) {
      std::size_t id = stack.back();
      stack.pop_back();
      if (seen[id]) continue;
      seen[id] = 1;
      const Node& n = nodes_[id];
      for (std::size_t i = 0; i < n.n_parents; ++i) stack.push_back(n.parents[i]);
    }
  }

  static void im2col(const double* x, const ConvAux& c, double* col) {
    std::size_t spatial = c.oh * c.ow;
    std::size_t p = 0;
    for (std::size_t ch = 0; ch < c.in_ch; ++ch)
      for (std::size_t ki = 0; ki < c.kernel; ++ki)
        for (std::size_t kj = 0; kj < c.kernel; ++kj, ++p) {
          double* out = col + p * spatial;
          for (std::size_t oh = 0; oh < c.oh; ++oh) {
            std::ptrdiff_t ih = std::ptrdiff_t(oh * c.stride + ki) - std::ptrdiff_t(c.pad);
            for (std::size_t ow = 0; ow < c.ow; ++ow) {
              std::ptrdiff_t iw = std::ptrdiff_t(ow * c.stride + kj) - std::ptrdiff_t(c.pad);
              bool in = ih >= 0 && ih < std::ptrdiff_t(c.h) && iw >= 0 && iw < std::ptrdiff_t(c.w);
              out[oh * c.ow + ow] = in ? x[(std::size_t(ih)) * c.w + std::size_t(iw)] : 0.0;
            }
          }
        }
  }

  void step_backward(std::size_t id) {
    Node& n = nodes_[id];
    const auto& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        return;
      case Op::Add: {
        auto& ga = nodes_[n.parents[0]].grad;
        auto& gb = nodes_[n.parents[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        return;
      }
      case Op::Mul: {
        auto& pa = nodes_[n.parents[0]];
        auto& pb = nodes_[n.parents[1]];
        if (n.parents[0] == n.parents[1]) {
          // square: one accumulation of 2*(g*x) keeps the gradient a
          // single well-defined rounding
          for (std::size_t i = 0; i < g.size(); ++i) pa.grad[i] += 2.0 * (g[i] * pa.value[i]);
          return;
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
          pa.grad[i] += g[i] * pb.value[i];
          pb.grad[i] += g[i] * pa.value[i];
        }
        return;
      }
      case Op::Scale: {
        auto& ga = nodes_[n.parents[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.factor * g[i];
        return;
      }
      case Op::Sum: {
        auto& ga = nodes_[n.parents[0]].grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        return;
      }
      case Op::Relu: {
        auto& pa = nodes_[n.parents[0]];
        for (std::size_t i = 0; i < g.size(); ++i)
          if (pa.value[i] > 0) pa.grad[i] += g[i];
        return;
      }
      case Op::Linear: {
        auto& px = nodes_[n.parents[0]];
        auto& pw = nodes_[n.parents[1]];
        std::size_t rows = px.value.dim(0), in = px.value.dim(1), out = pw.value.dim(0);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = g.data() + i * out;
          const double* xrow = px.value.data() + i * in;
          double* gxrow = px.grad.data() + i * in;
          for (std::size_t o = 0; o < out; ++o) {
            double go = grow[o];
            if (go == 0.0) continue;
            const double* wrow = pw.value.data() + o * in;
            double* gwrow = pw.grad.data() + o * in;
            for (std::size_t k = 0; k < in; ++k) {
              gxrow[k] += go * wrow[k];
              gwrow[k] += go * xrow[k];
            }
          }
        }
        if (n.n_parents == 3) {
          auto& pb = nodes_[n.parents[2]];
          for (std::size_t i = 0; i < rows; ++i) {
            const double* grow = g.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) pb.grad[o] += grow[o];
          }
        }
        return;
      }
      case Op::Conv2d: {
        const auto& c = std::get<ConvAux>(n.aux);
        auto& px = nodes_[n.parents[0]];
        auto& pw = nodes_[n.parents[1]];
        std::size_t imgs = px.value.dim(0);
        std::size_t patch = c.in_ch * c.kernel * c.kernel;
        std::size_t spatial = c.oh * c.ow;
        std::vector<double> col(patch * spatial), dcol(patch * spatial);
        for (std::size_t img = 0; img < imgs; ++img) {
          const double* ximg = px.value.data() + img * c.in_ch * c.h * c.w;
          const double* gimg = g.data() + img * c.out_ch * spatial;
          im2col(ximg, c, col.data());
          // dW += g . col^T
          for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
            const double* grow = gimg + oc * spatial;
            double* gwrow = pw.grad.data() + oc * patch;
            for (std::size_t p = 0; p < patch; ++p) {
              const double* crow = col.data() + p * spatial;
              double acc = 0;
              for (std::size_t s = 0; s < spatial; ++s) acc += grow[s] * crow[s];
              gwrow[p] += acc;
            }
          }
          // dcol = W^T . g
          std::fill(dcol.begin(), dcol.end(), 0.0);
          for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
            const double* grow = gimg + oc * spatial;
            const double* wrow = pw.value.data() + oc * patch;
            for (std::size_t p = 0; p < patch; ++p) {
              double wv_ = wrow[p];
              if (wv_ == 0.0) continue;
              double* drow = dcol.data() + p * spatial;
              for (std::size_t s = 0; s < spatial; ++s) drow[s] += wv_ * grow[s];
            }
          }
          double* gximg = px.grad.data() + img * c.in_ch * c.h * c.w;
          col2im_scatter(dcol.data(), c, gximg);
        }
        if (c.has_bias) {
          auto& pb = nodes_[n.parents[2]];
          for (std::size_t img = 0; img < imgs; ++img)
            for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
              const double* grow = g.data() + (img * c.out_ch + oc) * spatial;
              double acc = 0;
              for (std::size_t s = 0; s < spatial; ++s) acc += grow[s];
              pb.grad[oc] += acc;
            }
        }
        return;
      }
      case Op::BatchNorm2d: {
        const auto& aux = std::get<BnAux>(n.aux);
        auto& px = nodes_[n.parents[0]];
        auto& pg = nodes_[n.parents[1]];
        auto& pb = nodes_[n.parents[2]];
        std::size_t imgs = px.value.dim(0), c = aux.channels;
        std::size_t hw = aux.per_channel / imgs;
        double m = double(aux.per_channel);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t img = 0; img < imgs; ++img) {
            std::size_t base = (img * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              double gy = g[base + i];
              sum_dy += gy;
              sum_dy_xhat += gy * aux.x_hat[base + i];
            }
          }
          double gamma = pg.value[ch];
          pg.grad[ch] += sum_dy_xhat;
          pb.grad[ch] += sum_dy;
          double inv = aux.inv_std[ch];
          for (std::size_t img = 0; img < imgs; ++img) {
            std::size_t base = (img * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              double gy = g[base + i];
              px.grad[base + i] +=
                  gamma * inv / m * (m * gy - sum_dy - aux.x_hat[base + i] * sum_dy_xhat);
            }
          }
        }
        return;
      }
      case Op::Flatten: {
        auto& pa = nodes_[n.parents[0]];
        for (std::size_t i = 0; i < g.size(); ++i) pa.grad[i] += g[i];
        return;
      }
      case Op::SoftmaxCrossEntropy: {
        const auto& aux = std::get<SceAux>(n.aux);
        auto& pz = nodes_[n.parents[0]];
        std::size_t rows = pz.value.dim(0), classes = pz.value.dim(1);
        double scale = g[0] / double(rows);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < classes; ++j) {
            double p = aux.probs[i * classes + j];
            double target = j == aux.labels[i] ? 1.0 : 0.0;
            pz.grad[i * classes + j] += scale * (p - target);
          }
        return;
      }
    }
  }

  static void col2im_scatter(const double* col, const ConvAux& c, double* x) {
    std::size_t spatial = c.oh * c.ow;
    std::size_t p = 0;
    for (std::size_t ch = 0; ch < c.in_ch; ++ch) {
      double* xch = x + ch * c.h * c.w;
      for (std::size_t ki = 0; ki < c.kernel; ++ki)
        for (std::size_t kj = 0; kj < c.kernel; ++kj, ++p) {
          const double* in = col + p * spatial;
          for (std::size_t oh = 0; oh < c.oh; ++oh) {
            std::ptrdiff_t ih = std::ptrdiff_t(oh * c.stride + ki) - std::ptrdiff_t(c.pad);
            if (ih < 0 || ih >= std::ptrdiff_t(c.h)) continue;
            for (std::size_t ow = 0; ow < c.ow; ++ow) {
              std::ptrdiff_t iw = std::ptrdiff_t(ow * c.stride + kj) - std::ptrdiff_t(c.pad);
              if (iw < 0 || iw >= std::ptrdiff_t(c.w)) continue;
              xch[std::size_t(ih) * c.w + std::size_t(iw)] += in[oh * c.ow + ow];
            }
          }
        }
    }
  }
};

}  // namespace compander

#endif  // COMPANDER_AUTODIFF_HPP
