#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "gmf/error.hpp"
#include "gmf/format.hpp"
#include "gmf/matrix.hpp"

namespace gmf {

enum class LossKind { Squared, ExpFamily };

/// Residual loss selector. Squared is x^2; ExpFamily is
/// 2 (cosh(alpha x) - 1) / alpha^2, which tends to x^2 as alpha -> 0.
struct LossSpec {
  static constexpr double kDefaultAlpha = 0.0035;
  // |alpha * x| is clamped to this before exponentiation.
  static constexpr double kClamp = 500.0;

  LossKind kind = LossKind::Squared;
  double alpha = 0.0;

  static LossSpec squared() { return {LossKind::Squared, 0.0}; }
  static LossSpec exp_family(double a = kDefaultAlpha) { return {LossKind::ExpFamily, a}; }

  void validate() const {
    if (kind == LossKind::ExpFamily && !(alpha > 0.0 && std::isfinite(alpha))) {
      throw ValidationError("exp-family loss requires alpha > 0");
    }
  }

  /// "squared" or "exp:<alpha>", the form used in model headers and CLI flags.
  std::string to_string() const;
  static LossSpec parse(const std::string& text);

  friend bool operator==(const LossSpec& a, const LossSpec& b) {
    return a.kind == b.kind && (a.kind == LossKind::Squared || a.alpha == b.alpha);
  }
};

/// Value of a loss evaluation together with whether the overflow clamp fired.
struct LossEval {
  double value;
  bool saturated;
};

namespace detail {

inline void require_finite_residual(double x) {
  if (!std::isfinite(x)) throw ValidationError("non-finite residual (corrupt input or diverged state)");
}

inline double clamp_arg(double y, bool& saturated) noexcept {
  if (y > LossSpec::kClamp) {
    saturated = true;
    return LossSpec::kClamp;
  }
  if (y < -LossSpec::kClamp) {
    saturated = true;
    return -LossSpec::kClamp;
  }
  return y;
}

// Unchecked kernels for the training loop. 2(cosh y - 1) is evaluated as
// 4 sinh^2(y/2), which does not cancel for small y.
struct SquaredKernel {
  double value(double x) const noexcept { return x * x; }
  double deriv(double x) const noexcept { return 2.0 * x; }
};

struct ExpKernel {
  double alpha;
  double inv_alpha;
  double value(double x) const noexcept {
    bool sat = false;
    const double y = clamp_arg(alpha * x, sat);
    const double s = std::sinh(0.5 * y);
    return 4.0 * s * s * inv_alpha * inv_alpha;
  }
  double deriv(double x) const noexcept {
    bool sat = false;
    const double y = clamp_arg(alpha * x, sat);
    return 2.0 * std::sinh(y) * inv_alpha;
  }
};

}  // namespace detail

inline LossEval loss_value_checked(double x, const LossSpec& spec) {
  detail::require_finite_residual(x);
  if (spec.kind == LossKind::Squared) return {x * x, false};
  spec.validate();
  bool sat = false;
  const double y = detail::clamp_arg(spec.alpha * x, sat);
  const double s = std::sinh(0.5 * y);
  return {4.0 * s * s / (spec.alpha * spec.alpha), sat};
}

inline LossEval loss_deriv_checked(double x, const LossSpec& spec) {
  detail::require_finite_residual(x);
  if (spec.kind == LossKind::Squared) return {2.0 * x, false};
  spec.validate();
  bool sat = false;
  const double y = detail::clamp_arg(spec.alpha * x, sat);
  return {2.0 * std::sinh(y) / spec.alpha, sat};
}

/// Psi(x).
inline double loss_value(double x, const LossSpec& spec) { return loss_value_checked(x, spec).value; }

/// psi(x) = dPsi/dx.
inline double loss_deriv(double x, const LossSpec& spec) { return loss_deriv_checked(x, spec).value; }

/// Objective value plus the number of residuals that hit the overflow clamp.
struct ObjectiveEval {
  double value = 0.0;
  std::size_t saturated = 0;
};

inline ObjectiveEval objective_checked(const Matrix& x, const Matrix& a, const Matrix& b,
                                       const LossSpec& spec) {
  if (a.rows() != x.rows() || b.cols() != x.cols() || a.cols() != b.rows()) {
    throw ValidationError("objective: dimension mismatch (X " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + ", A " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + ", B " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
  spec.validate();
  const Matrix residual = x - a * b;
  ObjectiveEval out;
  double total = 0.0;
  if (spec.kind == LossKind::Squared) {
    total = residual.squaredNorm();
  } else {
    const detail::ExpKernel k{spec.alpha, 1.0 / spec.alpha};
    for (Index j = 0; j < residual.cols(); ++j) {
      for (Index i = 0; i < residual.rows(); ++i) {
        const double e = residual(i, j);
        if (std::abs(spec.alpha * e) > LossSpec::kClamp) ++out.saturated;
        total += k.value(e);
      }
    }
  }
  out.value = total / (static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
  return out;
}

/// Mean loss over all residuals of X - AB, normalized by p*n.
inline double objective(const Matrix& x, const Matrix& a, const Matrix& b, const LossSpec& spec) {
  return objective_checked(x, a, b, spec).value;
}

inline double objective(const DataMatrix& x, const Matrix& a, const Matrix& b, const LossSpec& spec) {
  return objective(x.values, a, b, spec);
}

inline std::string LossSpec::to_string() const {
  if (kind == LossKind::Squared) return "squared";
  return "exp:" + format_double(alpha);
}

inline LossSpec LossSpec::parse(const std::string& text) {
  if (text == "squared") return squared();
  if (text == "exp") return exp_family();
  if (text.rfind("exp:", 0) == 0) {
    const std::string num = text.substr(4);
    double a = 0.0;
    if (!parse_double(num, a)) throw ValidationError("invalid loss alpha '" + num + "'");
    LossSpec s = exp_family(a);
    s.validate();
    return s;
  }
  throw ValidationError("unknown loss '" + text + "' (expected squared, exp or exp:<alpha>)");
}

}  // namespace gmf
