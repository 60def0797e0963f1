#ifndef COMPANDER_COMPAND_HPP
#define COMPANDER_COMPAND_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "compander/nn.hpp"
#include "compander/reparam.hpp"
#include "compander/tensor.hpp"

namespace compander {

/// Which psi family a companded model uses and with what parameters.
struct ReparamSpec {
  ReparamKind kind = ReparamKind::Identity;
  ReparamParams params;
};

/// Baseline initialization drew a weight outside the image of psi, so
/// the latent v does not exist. Signals misconfiguration (too small a).
class InitDomainError : public std::domain_error {
 public:
  InitDomainError(std::string layer, double a, double max_abs_w0)
      : std::domain_error("initialization outside image of psi at " + layer +
                          ": a=" + std::to_string(a) +
                          ", max|w0|=" + std::to_string(max_abs_w0)),
        layer_(std::move(layer)),
        a_(a),
        max_abs_w0_(max_abs_w0) {}
  const std::string& layer() const { return layer_; }
  double a() const { return a_; }
  double max_abs_w0() const { return max_abs_w0_; }

 private:
  std::string layer_;
  double a_, max_abs_w0_;
};

/// Selects which parameters get a latent v. Biases and BatchNorm
/// parameters are excluded unconditionally; include can only narrow the
/// default (all weight matrices and convolution kernels).
struct ReparamPolicy {
  std::function<bool(const ParamInfo&)> include;

  bool covers(const ParamInfo& info) const {
    if (info.role != ParamRole::Weight) return false;
    return include ? include(info) : true;
  }
};

/// One reparameterized parameter. The materialized w lives in the model
/// slot and is kept equal to psi(v) whenever dirty is false.
struct CompandedParam {
  std::size_t slot = 0;   // model param index; that tensor is the w cache
  std::size_t scope = 0;  // SharedAbState scope index
  Tensor<double> v;
  bool dirty = true;
};

struct AbScopeState {
  std::string name;
  double a = 1.0;
  double b = 1.0;
  double grad_a = 0.0;
  double grad_b = 0.0;
};

/// (a, b) storage at the configured granularity: one scope for the
/// whole network (coarse) or one per companded layer (fine).
struct SharedAbState {
  AbScope scope = AbScope::PerLayer;
  std::vector<AbScopeState> scopes;
};

class CompandedModel {
 public:
  CompandedModel(Model model, const ReparamPolicy& policy, const ReparamSpec& spec,
                 std::uint64_t seed, InitScheme scheme = InitScheme::KaimingUniform,
                 bool literal_two_over_n = false)
      : model_(std::move(model)), spec_(spec) {
    if (spec_.kind == ReparamKind::WeightNorm)
      throw std::invalid_argument(
          "weight_norm is a per-row materialization primitive (weight_norm_materialize); "
          "it is not wired into the training pipeline");
    if (spec_.params.mode == AbMode::Learnable && spec_.kind != ReparamKind::Arctan)
      throw std::invalid_argument("learnable a, b are supported for arctan only");
    detail::check_params(spec_.kind, spec_.params);

    model_.init_params(seed, scheme, literal_two_over_n);

    ab_.scope = spec_.params.scope;
    if (ab_.scope == AbScope::Global)
      ab_.scopes.push_back({"global", spec_.params.a, spec_.params.b, 0.0, 0.0});

    const auto& infos = model_.param_infos();
    slot_to_companded_.assign(infos.size(), -1);
    for (std::size_t slot = 0; slot < infos.size(); ++slot) {
      const ParamInfo& info = infos[slot];
      if (!policy.covers(info)) continue;
      std::size_t scope_idx = 0;
      if (ab_.scope == AbScope::PerLayer) {
        scope_idx = ab_.scopes.size();
        ab_.scopes.push_back(
            {"L" + std::to_string(info.layer), spec_.params.a, spec_.params.b, 0.0, 0.0});
      }
      const Tensor<double>& w0 = model_.params()[slot];
      check_init_domain(info, w0);
      CompandedParam cp;
      cp.slot = slot;
      cp.scope = scope_idx;
      cp.v = Tensor<double>(w0.shape());
      ReparamParams p = scope_params(scope_idx);
      for (std::size_t i = 0; i < w0.size(); ++i) cp.v[i] = psi_inverse(spec_.kind, p, w0[i]);
      cp.dirty = true;
      slot_to_companded_[slot] = std::ptrdiff_t(companded_.size());
      companded_.push_back(std::move(cp));
    }
    materialize_all();
  }

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const ReparamSpec& spec() const { return spec_; }
  SharedAbState& ab_state() { return ab_; }
  const SharedAbState& ab_state() const { return ab_; }
  std::vector<CompandedParam>& companded() { return companded_; }
  const std::vector<CompandedParam>& companded() const { return companded_; }

  bool is_companded(std::size_t slot) const { return slot_to_companded_.at(slot) >= 0; }

  std::size_t companded_index(std::size_t slot) const {
    auto idx = slot_to_companded_.at(slot);
    if (idx < 0)
      throw std::invalid_argument("parameter " + model_.param_infos()[slot].name +
                                  " is not companded");
    return std::size_t(idx);
  }

  /// Current psi parameters for a scope (learnable values move).
  ReparamParams scope_params(std::size_t scope_idx) const {
    ReparamParams p = spec_.params;
    const AbScopeState& s = ab_.scopes.at(scope_idx);
    p.a = s.a;
    p.b = s.b;
    return p;
  }

  void mark_dirty() {
    for (auto& cp : companded_) cp.dirty = true;
  }

  /// Refreshes the model slot of one companded param; idempotent.
  const Tensor<double>& materialize(std::size_t ci) {
    CompandedParam& cp = companded_.at(ci);
    Tensor<double>& w = model_.params()[cp.slot];
    if (cp.dirty) {
      ReparamParams p = scope_params(cp.scope);
      for (std::size_t i = 0; i < cp.v.size(); ++i) w[i] = psi(spec_.kind, p, cp.v[i]);
      cp.dirty = false;
    }
    return w;
  }

  void materialize_all() {
    for (std::size_t ci = 0; ci < companded_.size(); ++ci) materialize(ci);
  }

  struct ChainResult {
    Tensor<double> grad_v;
    Tensor<double> grad_psi_raw;
  };

  /// Splits a weight gradient: grad_psi_raw = grad_w + 2*lambda*w (the
  /// decay-on-psi term), grad_v = grad_psi_raw * psi'(v). The raw side
  /// feeds the modified adaptive optimizer, grad_v feeds SGD.
  ChainResult chain_backward(std::size_t ci, const Tensor<double>& grad_w, double lambda) const {
    const CompandedParam& cp = companded_.at(ci);
    if (!grad_w.same_shape(cp.v))
      throw std::invalid_argument("chain_backward: grad shape " + shape_str(grad_w.shape()) +
                                  " vs v " + shape_str(cp.v.shape()));
    if (lambda < 0) throw std::invalid_argument("chain_backward: lambda must be >= 0");
    const Tensor<double>& w = model_.params()[cp.slot];
    ReparamParams p = scope_params(cp.scope);
    ChainResult r{Tensor<double>(cp.v.shape()), Tensor<double>(cp.v.shape())};
    if (lambda == 0.0) {
      for (std::size_t i = 0; i < cp.v.size(); ++i) {
        r.grad_psi_raw[i] = grad_w[i];
        r.grad_v[i] = grad_w[i] * psi_prime(spec_.kind, p, cp.v[i]);
      }
      return r;
    }
    const double two_lambda = 2.0 * lambda;
    for (std::size_t i = 0; i < cp.v.size(); ++i) {
      double raw = grad_w[i] + two_lambda * w[i];
      r.grad_psi_raw[i] = raw;
      r.grad_v[i] = raw * psi_prime(spec_.kind, p, cp.v[i]);
    }
    return r;
  }

  Tensor<double> psi_prime_tensor(std::size_t ci) const {
    const CompandedParam& cp = companded_.at(ci);
    ReparamParams p = scope_params(cp.scope);
    Tensor<double> out(cp.v.shape());
    for (std::size_t i = 0; i < cp.v.size(); ++i) out[i] = psi_prime(spec_.kind, p, cp.v[i]);
    return out;
  }

  void zero_ab_grads() {
    for (auto& s : ab_.scopes) {
      s.grad_a = 0.0;
      s.grad_b = 0.0;
    }
  }

  /// Adds dL/da = sum grad_w_i * atan(v_i/b) and
  /// dL/db = sum grad_w_i * (-a v_i / (b^2 + v_i^2)) into each scope's
  /// accumulators. grads_by_slot holds raw dL/dw aligned with model
  /// params; no decay term enters (decay never touches a, b).
  void accumulate_ab_grads(const std::vector<Tensor<double>>& grads_by_slot) {
    if (spec_.params.mode != AbMode::Learnable)
      throw std::logic_error("accumulate_ab_grads: a, b are fixed in this model");
    for (const auto& cp : companded_) {
      const Tensor<double>& gw = grads_by_slot.at(cp.slot);
      if (!gw.same_shape(cp.v))
        throw std::invalid_argument("accumulate_ab_grads: grad shape mismatch at slot " +
                                    std::to_string(cp.slot));
      AbScopeState& s = ab_.scopes[cp.scope];
      double ga = 0, gb = 0;
      for (std::size_t i = 0; i < cp.v.size(); ++i) {
        double v = cp.v[i];
        ga += gw[i] * std::atan(v / s.b);
        gb += gw[i] * (-s.a * v / (s.b * s.b + v * v));
      }
      s.grad_a += ga;
      s.grad_b += gb;
    }
  }

  /// Projects learnable a, b back to the allowed region after a step.
  void clamp_ab() {
    for (auto& s : ab_.scopes) {
      if (s.a < kMinLearnableAb) s.a = kMinLearnableAb;
      if (s.b < kMinLearnableAb) s.b = kMinLearnableAb;
    }
  }

  /// Checks the fixed exclusions: only weight-role parameters may carry
  /// a latent v.
  void audit_policy() const {
    for (const auto& cp : companded_)
      if (model_.param_infos()[cp.slot].role != ParamRole::Weight)
        throw std::logic_error("policy violation: " + model_.param_infos()[cp.slot].name +
                               " is companded but not a weight");
  }

  /// Plain model with psi(v) written in place of every companded slot;
  /// no reparameterization state survives.
  Model bake() {
    materialize_all();
    return model_;
  }

 private:
  Model model_;
  ReparamSpec spec_;
  SharedAbState ab_;
  std::vector<CompandedParam> companded_;
  std::vector<std::ptrdiff_t> slot_to_companded_;

  void check_init_domain(const ParamInfo& info, const Tensor<double>& w0) const {
    double bound = 0;
    if (spec_.kind == ReparamKind::Arctan)
      bound = spec_.params.a * (std::numbers::pi / 2);
    else if (spec_.kind == ReparamKind::Erf)
      bound = spec_.params.a;
    else
      return;
    double mx = 0;
    for (double w : w0) mx = std::max(mx, std::abs(w));
    if (mx >= bound)
      throw InitDomainError("L" + std::to_string(info.layer), spec_.params.a, mx);
  }
};

inline CompandedModel wrap_model(Model model, const ReparamPolicy& policy,
                                 const ReparamSpec& spec, std::uint64_t seed,
                                 InitScheme scheme = InitScheme::KaimingUniform,
                                 bool literal_two_over_n = false) {
  return CompandedModel(std::move(model), policy, spec, seed, scheme, literal_two_over_n);
}

}  // namespace compander

#endif  // COMPANDER_COMPAND_HPP
