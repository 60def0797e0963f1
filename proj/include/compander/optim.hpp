#ifndef COMPANDER_OPTIM_HPP
#define COMPANDER_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "compander/tensor.hpp"

namespace compander {

/// Raised when a gradient (or loss) stops being finite; carries the
/// parameter the update was for.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string param, const std::string& detail)
      : std::runtime_error("divergence at " + param + ": " + detail), param_(std::move(param)) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

namespace detail {
inline void check_grad(const Tensor<double>& v, const Tensor<double>& g, const std::string& name) {
  if (!v.same_shape(g))
    throw std::invalid_argument("step on " + name + ": grad shape " + shape_str(g.shape()) +
                                " vs param " + shape_str(v.shape()));
  if (!g.all_finite()) throw DivergenceError(name, "non-finite gradient");
}
}  // namespace detail

/// Gradient contribution of the decay penalty lambda*psi(v)^2 with
/// respect to v: 2*lambda*w*psi'(v), where w = psi(v).
inline double decay_grad_on_psi(double w, double psi_prime_v, double lambda) {
  if (lambda < 0) throw std::invalid_argument("decay_grad_on_psi: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  return (2.0 * lambda) * w * psi_prime_v;
}

struct SgdState {
  double lr = 0.1;
  double momentum = 0.9;
  double lambda = 0.0;
  std::vector<Tensor<double>> velocity;

  SgdState() = default;
  SgdState(double lr_, double momentum_, double lambda_, const std::vector<Shape>& shapes)
      : lr(lr_), momentum(momentum_), lambda(lambda_) {
    if (!(lr >= 0)) throw std::invalid_argument("sgd: lr must be >= 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("sgd: momentum must be in [0,1)");
    if (lambda < 0) throw std::invalid_argument("sgd: lambda must be >= 0");
    velocity.reserve(shapes.size());
    for (const auto& s : shapes) velocity.emplace_back(s);
  }
};

/// velocity <- momentum*velocity + grad; v <- v - lr*velocity.
inline void sgd_step(SgdState& st, std::size_t slot, Tensor<double>& v, const Tensor<double>& grad,
                     const std::string& name) {
  detail::check_grad(v, grad, name);
  auto& vel = st.velocity.at(slot);
  for (std::size_t i = 0; i < v.size(); ++i) {
    vel[i] = st.momentum * vel[i] + grad[i];
    v[i] -= st.lr * vel[i];
  }
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda = 0.0;
  std::vector<Tensor<double>> m;
  std::vector<Tensor<double>> s;
  std::vector<std::int64_t> t;  // per-slot step count; slots step in lockstep

  AdamState() = default;
  AdamState(double lr_, double beta1_, double beta2_, double eps_, double lambda_,
            const std::vector<Shape>& shapes)
      : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_), lambda(lambda_) {
    if (!(lr >= 0)) throw std::invalid_argument("adam: lr must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw std::invalid_argument("adam: betas must be in [0,1)");
    if (!(eps > 0)) throw std::invalid_argument("adam: eps must be > 0");
    if (lambda < 0) throw std::invalid_argument("adam: lambda must be >= 0");
    m.reserve(shapes.size());
    s.reserve(shapes.size());
    for (const auto& sh : shapes) {
      m.emplace_back(sh);
      s.emplace_back(sh);
      t.push_back(0);
    }
  }
};

namespace detail {

/// Shared Adam kernel. Moments always update from grad; the applied
/// step is scaled elementwise by psi_prime_v when given, so the
/// identity reparameterization reduces to plain Adam exactly.
inline void adam_core(AdamState& st, std::size_t slot, Tensor<double>& v,
                      const Tensor<double>& grad, const Tensor<double>* psi_prime_v,
                      const std::string& name) {
  check_grad(v, grad, name);
  if (psi_prime_v && !psi_prime_v->same_shape(v))
    throw std::invalid_argument("step on " + name + ": psi_prime shape mismatch");
  auto& m = st.m.at(slot);
  auto& s = st.s.at(slot);
  std::int64_t t = ++st.t.at(slot);
  double bc1 = 1.0 - std::pow(st.beta1, double(t));
  double bc2 = 1.0 - std::pow(st.beta2, double(t));
  for (std::size_t i = 0; i < v.size(); ++i) {
    double g = grad[i];
    m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
    s[i] = st.beta2 * s[i] + (1.0 - st.beta2) * (g * g);
    double mhat = m[i] / bc1;
    double shat = s[i] / bc2;
    double step = st.lr * mhat / (std::sqrt(shat) + st.eps);
    if (psi_prime_v) step = step * (*psi_prime_v)[i];
    v[i] -= step;
  }
}

}  // namespace detail

inline void adam_step(AdamState& st, std::size_t slot, Tensor<double>& v,
                      const Tensor<double>& grad, const std::string& name) {
  detail::adam_core(st, slot, v, grad, nullptr, name);
}

/// The modified adaptive rule: the adaptive step is computed from the
/// raw gradient dL/dpsi(v) (moments track it too) and only the applied
/// step is multiplied by psi'(v).
inline void modified_adam_step(AdamState& st, std::size_t slot, Tensor<double>& v,
                               const Tensor<double>& grad_psi, const Tensor<double>& psi_prime_v,
                               const std::string& name) {
  detail::adam_core(st, slot, v, grad_psi, &psi_prime_v, name);
}

struct LrSchedule {
  std::vector<std::size_t> milestones;
  double factor = 1.0;

  LrSchedule() = default;
  LrSchedule(std::vector<std::size_t> milestones_, double factor_)
      : milestones(std::move(milestones_)), factor(factor_) {
    if (!(factor > 0) || factor > 1)
      throw std::invalid_argument("lr schedule: factor must be in (0,1]");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1])
        throw std::invalid_argument("lr schedule: milestones must be strictly increasing");
  }
};

/// base_lr * factor^(number of milestones <= epoch).
inline double lr_at(const LrSchedule& sched, double base_lr, std::size_t epoch) {
  std::size_t passed = 0;
  for (std::size_t mi : sched.milestones)
    if (mi <= epoch) ++passed;
  double lr = base_lr;
  for (std::size_t i = 0; i < passed; ++i) lr *= sched.factor;
  return lr;
}

}  // namespace compander

#endif  // COMPANDER_OPTIM_HPP
