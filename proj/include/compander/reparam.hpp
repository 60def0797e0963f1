#ifndef COMPANDER_REPARAM_HPP
#define COMPANDER_REPARAM_HPP

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include "compander/tensor.hpp"

namespace compander {

/// Weight reparameterization families. The effective weight is
/// w = psi(v) of a latent weight v; the network consumes w while the
/// optimizer updates v.
///
///   Identity   psi(v) = v
///   Arctan     psi(v) = a*atan(v/b), image (-a*pi/2, a*pi/2)
///   Arcsinh    psi(v) = a*asinh(v/b), unbounded
///   Erf        psi(v) = a*erf(v/b), image (-a, a)
///   Powerprop  psi(v) = v*|v|^(alpha-1), alpha >= 1
///   WeightNorm per-row w = g * v/||v||; not a scalar map, see
///              weight_norm_materialize
enum class ReparamKind { Identity, Arctan, Arcsinh, Erf, Powerprop, WeightNorm };

enum class AbMode { Fixed, Learnable };
enum class AbScope { Global, PerLayer };

/// Lower clamp applied to learnable a, b after every optimizer step.
inline constexpr double kMinLearnableAb = 0.05;

struct ReparamParams {
  double a = 1.0;      // output scale
  double b = 1.0;      // input scale
  double alpha = 1.0;  // Powerprop exponent
  AbMode mode = AbMode::Fixed;
  AbScope scope = AbScope::PerLayer;
};

inline const char* reparam_kind_name(ReparamKind kind) {
  switch (kind) {
    case ReparamKind::Identity: return "identity";
    case ReparamKind::Arctan: return "arctan";
    case ReparamKind::Arcsinh: return "arcsinh";
    case ReparamKind::Erf: return "erf";
    case ReparamKind::Powerprop: return "powerprop";
    case ReparamKind::WeightNorm: return "weight_norm";
  }
  return "?";
}

namespace detail {

inline void check_scalar_kind(ReparamKind kind) {
  if (kind == ReparamKind::WeightNorm)
    throw std::invalid_argument("weight_norm is a per-row map; use weight_norm_materialize");
}

inline void check_params(ReparamKind kind, const ReparamParams& p) {
  check_scalar_kind(kind);
  if (kind == ReparamKind::Powerprop) {
    if (!(p.alpha >= 1.0) || !std::isfinite(p.alpha))
      throw std::invalid_argument("powerprop requires alpha >= 1, got " + std::to_string(p.alpha));
    return;
  }
  if (kind == ReparamKind::Identity) return;
  if (!(p.a > 0.0) || !std::isfinite(p.a) || !(p.b > 0.0) || !std::isfinite(p.b))
    throw std::invalid_argument(std::string(reparam_kind_name(kind)) +
                                " requires a > 0 and b > 0, got a=" + std::to_string(p.a) +
                                " b=" + std::to_string(p.b));
  double floor = p.mode == AbMode::Learnable ? kMinLearnableAb : 0.0;
  if (p.mode == AbMode::Learnable && (p.a < floor || p.b < floor))
    throw std::invalid_argument("learnable a, b must stay >= " + std::to_string(kMinLearnableAb));
}

inline void check_value(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite reparam input");
}

// Inverse error function on (-1, 1). Winitzki's closed-form seed
// refined by Newton; the tail iterates on erfc where 1-y is exact,
// avoiding cancellation near |y| = 1.
inline double erf_inverse(double y) {
  double sign = y < 0.0 ? -1.0 : 1.0;
  y = std::abs(y);
  if (y == 0.0) return 0.0;

  constexpr double kA = 0.147;
  constexpr double kTwoOverPiA = 2.0 / (std::numbers::pi * kA);
  const double t = std::log1p(-y * y);
  const double u = kTwoOverPiA + 0.5 * t;
  double x = std::sqrt(std::sqrt(u * u - t / kA) - u);

  const double half_sqrt_pi = 0.5 * std::sqrt(std::numbers::pi);
  if (y > 0.5) {
    const double eps = 1.0 - y;  // exact: y in [0.5, 1)
    for (int i = 0; i < 5; ++i) x += (std::erfc(x) - eps) * half_sqrt_pi * std::exp(x * x);
  } else {
    for (int i = 0; i < 5; ++i) x -= (std::erf(x) - y) * half_sqrt_pi * std::exp(x * x);
  }
  return sign * x;
}

// Largest double strictly below bound (bound > 0).
inline double just_below(double bound) { return std::nextafter(bound, 0.0); }

}  // namespace detail

/// True when fixed-mode params fall in the regime the arctan family is
/// not tuned for (a < 0.5 with b > 0.5); accepted, but worth a warning.
inline bool params_outside_recommended(ReparamKind kind, const ReparamParams& p) {
  if (kind != ReparamKind::Arctan && kind != ReparamKind::Arcsinh && kind != ReparamKind::Erf)
    return false;
  return p.mode == AbMode::Fixed && (p.a < 0.5 || p.b < 0.5);
}

/// w = psi(v).
inline double psi(ReparamKind kind, const ReparamParams& p, double v) {
  detail::check_params(kind, p);
  detail::check_value(v);
  switch (kind) {
    case ReparamKind::Identity:
      return v;
    case ReparamKind::Arctan: {
      double w = p.a * std::atan(v / p.b);
      // atan saturates at the double nearest pi/2; keep the image open
      double bound = p.a * (std::numbers::pi / 2);
      if (w >= bound) return detail::just_below(bound);
      if (w <= -bound) return -detail::just_below(bound);
      return w;
    }
    case ReparamKind::Arcsinh:
      return p.a * std::asinh(v / p.b);
    case ReparamKind::Erf: {
      double w = p.a * std::erf(v / p.b);
      if (w >= p.a) return detail::just_below(p.a);
      if (w <= -p.a) return -detail::just_below(p.a);
      return w;
    }
    case ReparamKind::Powerprop:
      return p.alpha == 1.0 ? v : v * std::pow(std::abs(v), p.alpha - 1.0);
    case ReparamKind::WeightNorm:
      break;
  }
  throw std::invalid_argument("unsupported kind");
}

/// d psi / d v. Maximal at v = 0 for the S-shaped families (a/b for
/// arctan, so greater than 1 whenever a > b).
inline double psi_prime(ReparamKind kind, const ReparamParams& p, double v) {
  detail::check_params(kind, p);
  detail::check_value(v);
  switch (kind) {
    case ReparamKind::Identity:
      return 1.0;
    case ReparamKind::Arctan: {
      double r = v / p.b;
      return p.a / (p.b * (1.0 + r * r));
    }
    case ReparamKind::Arcsinh: {
      double r = v / p.b;
      return p.a / (p.b * std::sqrt(1.0 + r * r));
    }
    case ReparamKind::Erf: {
      double r = v / p.b;
      return 2.0 * p.a / (p.b * std::sqrt(std::numbers::pi)) * std::exp(-r * r);
    }
    case ReparamKind::Powerprop:
      return p.alpha == 1.0 ? 1.0 : p.alpha * std::pow(std::abs(v), p.alpha - 1.0);
    case ReparamKind::WeightNorm:
      break;
  }
  throw std::invalid_argument("unsupported kind");
}

/// v = psi^{-1}(w); w must lie inside the image of psi.
inline double psi_inverse(ReparamKind kind, const ReparamParams& p, double w) {
  detail::check_params(kind, p);
  detail::check_value(w);
  switch (kind) {
    case ReparamKind::Identity:
      return w;
    case ReparamKind::Arctan: {
      double bound = p.a * (std::numbers::pi / 2);
      if (!(std::abs(w) < bound))
        throw std::domain_error("arctan inverse: |w|=" + std::to_string(std::abs(w)) +
                                " not inside (-a*pi/2, a*pi/2) = (+-" + std::to_string(bound) + ")");
      return p.b * std::tan(w / p.a);
    }
    case ReparamKind::Arcsinh:
      return p.b * std::sinh(w / p.a);
    case ReparamKind::Erf: {
      if (!(std::abs(w) < p.a))
        throw std::domain_error("erf inverse: |w|=" + std::to_string(std::abs(w)) +
                                " not inside (-a, a) = (+-" + std::to_string(p.a) + ")");
      return p.b * detail::erf_inverse(w / p.a);
    }
    case ReparamKind::Powerprop: {
      if (p.alpha == 1.0) return w;
      double mag = std::pow(std::abs(w), 1.0 / p.alpha);
      return std::copysign(mag, w);
    }
    case ReparamKind::WeightNorm:
      break;
  }
  throw std::invalid_argument("unsupported kind");
}

struct AbGrad {
  double da = 0.0;
  double db = 0.0;
};

/// Gradients of psi with respect to the shared parameters a and b.
/// Defined for the arctan family only (the learnable mode).
inline AbGrad psi_grad_ab(ReparamKind kind, const ReparamParams& p, double v) {
  if (kind != ReparamKind::Arctan)
    throw std::invalid_argument(std::string("psi_grad_ab: a, b are only learnable for arctan, got ") +
                                reparam_kind_name(kind));
  detail::check_params(kind, p);
  detail::check_value(v);
  return {std::atan(v / p.b), -p.a * v / (p.b * p.b + v * v)};
}

/// Per-row weight normalization w_row = g_row * v_row / ||v_row||.
/// Rows are the leading dimension (one output unit each); g has one
/// entry per row.
template <typename T>
Tensor<T> weight_norm_materialize(const Tensor<T>& v, std::span<const T> g) {
  if (v.ndim() < 1 || v.dim(0) == 0) throw std::invalid_argument("weight_norm: need at least one row");
  std::size_t rows = v.dim(0);
  if (g.size() != rows)
    throw std::invalid_argument("weight_norm: " + std::to_string(g.size()) + " gains for " +
                                std::to_string(rows) + " rows");
  std::size_t cols = v.size() / rows;
  Tensor<T> out(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = v.data() + r * cols;
    T* dst = out.data() + r * cols;
    T sq = 0;
    for (std::size_t c = 0; c < cols; ++c) sq += src[c] * src[c];
    T norm = std::sqrt(sq);
    if (norm == T{0}) throw std::invalid_argument("weight_norm: zero-norm row " + std::to_string(r));
    T s = g[r] / norm;
    for (std::size_t c = 0; c < cols; ++c) dst[c] = s * src[c];
  }
  return out;
}

}  // namespace compander

#endif  // COMPANDER_REPARAM_HPP
