#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmf/error.hpp"
#include "gmf/loss.hpp"
#include "gmf/matrix.hpp"

namespace gmf {

/// Hyperparameters for one GMF run.
struct TrainConfig {
  Index q = 10;             // number of metavariables
  std::size_t m = 100;      // global iterations (full sweeps)
  double lambda0 = 0.01;    // initial learning rate
  double xi = 0.75;         // learning-rate correction factor on a non-improving sweep
  LossSpec loss = LossSpec::squared();
  std::uint64_t seed = 0;
  double init_scale = 0.1;  // initial entries uniform on [-init_scale, init_scale]

  void validate() const {
    if (q < 1) throw ValidationError("q must be >= 1");
    if (m < 1) throw ValidationError("number of global iterations must be >= 1");
    if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) throw ValidationError("lambda0 must be > 0");
    if (!(xi > 0.0 && xi < 1.0)) throw ValidationError("xi must lie in (0, 1)");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
      throw ValidationError("init_scale must be >= 0");
    }
    loss.validate();
  }
};

struct TraceRecord {
  std::size_t iteration;  // 1-based
  double objective;       // L after this sweep
  double best;            // best-so-far L_S
  double lambda;          // learning rate after the step-size decision
  double ms;              // cumulative wall-clock milliseconds
};

using TrainTrace = std::vector<TraceRecord>;

struct FactorModel {
  Matrix A;  // p x q loadings
  Matrix B;  // q x n metavariables
  TrainConfig config;
  double final_objective = 0.0;
  TrainTrace trace;
  std::size_t saturated_residuals = 0;  // residuals clamped in the final objective pass
  std::vector<std::string> warnings;

  Index p() const noexcept { return A.rows(); }
  Index n() const noexcept { return B.cols(); }
  Index q() const noexcept { return A.cols(); }
};

/// Divergence guard: training aborts once the objective exceeds this.
inline constexpr double kDivergenceLimit = 1e12;

/// Deterministic uniform initialization. A is filled row by row, then B row
/// by row, from a single mt19937_64 stream.
inline std::pair<Matrix, Matrix> init_factors(Index p, Index n, Index q, std::uint64_t seed,
                                              double init_scale) {
  if (p < 1 || n < 1 || q < 1) throw ValidationError("init_factors: p, n, q must be >= 1");
  std::mt19937_64 rng(seed);
  auto draw = [&] { return (2.0 * unit_interval(rng()) - 1.0) * init_scale; };
  Matrix a(p, q), b(q, n);
  for (Index i = 0; i < p; ++i)
    for (Index f = 0; f < q; ++f) a(i, f) = draw();
  for (Index f = 0; f < q; ++f)
    for (Index j = 0; j < n; ++j) b(f, j) = draw();
  return {std::move(a), std::move(b)};
}

/// Observer invoked after the factor cycle of every (i, j) with the
/// incrementally maintained residual and the current a_i (length q) and b_j.
/// The default does nothing.
struct NoObserver {
  void operator()(Index, Index, double, std::span<const double>, std::span<const double>) const noexcept {}
};

namespace detail {

template <typename Kernel, typename Observer>
void sweep(const std::vector<double>& x_rows, std::vector<double>& a_rows, std::vector<double>& b_cols,
           Index p, Index n, Index q, double lambda, const Kernel& kernel, Observer& observer) {
  for (Index i = 0; i < p; ++i) {
    double* a = a_rows.data() + i * q;
    const double* xi = x_rows.data() + i * n;
    for (Index j = 0; j < n; ++j) {
      double* b = b_cols.data() + j * q;
      double s = 0.0;
      for (Index f = 0; f < q; ++f) s += a[f] * b[f];
      double e = xi[j] - s;
      for (Index f = 0; f < q; ++f) {
        double prod = a[f] * b[f];
        a[f] += lambda * kernel.deriv(e) * b[f];
        e = e + prod - a[f] * b[f];
        prod = a[f] * b[f];
        b[f] += lambda * kernel.deriv(e) * a[f];
        e = e + prod - a[f] * b[f];
      }
      observer(i, j, e, std::span<const double>(a, static_cast<std::size_t>(q)),
               std::span<const double>(b, static_cast<std::size_t>(q)));
    }
  }
}

inline Matrix rows_to_matrix(const std::vector<double>& a_rows, Index p, Index q) {
  Matrix a(p, q);
  for (Index i = 0; i < p; ++i)
    for (Index f = 0; f < q; ++f) a(i, f) = a_rows[static_cast<std::size_t>(i * q + f)];
  return a;
}

}  // namespace detail

/// Runs the interleaved SGD from explicit starting factors.
///
/// Each global iteration visits entries row by row (gene i outer, sample j
/// inner). For every entry the residual E = x_ij - sum_f a_if b_fj is formed
/// once and then kept current while, for each factor f in turn, a_if and then
/// b_fj take a gradient step. After the sweep the full objective L is
/// evaluated; an improvement becomes the new best, otherwise lambda is
/// multiplied by xi. Exactly config.m sweeps are run.
template <typename Observer = NoObserver>
FactorModel train(const DataMatrix& x, const TrainConfig& config, Matrix a0, Matrix b0,
                  Observer&& observer = Observer{}) {
  validate(x);
  config.validate();
  const Index p = x.rows(), n = x.cols(), q = config.q;
  if (a0.rows() != p || a0.cols() != q || b0.rows() != q || b0.cols() != n) {
    throw ValidationError("train: initial factors do not match X and q");
  }

  FactorModel model;
  model.config = config;
  if (q > std::min(p, n)) {
    model.warnings.push_back("q = " + std::to_string(q) + " exceeds min(p, n) = " +
                             std::to_string(std::min(p, n)) + "; factorization is over-complete");
  }

  std::vector<double> x_rows(static_cast<std::size_t>(p * n));
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < n; ++j) x_rows[static_cast<std::size_t>(i * n + j)] = x.values(i, j);
  std::vector<double> a_rows(static_cast<std::size_t>(p * q));
  for (Index i = 0; i < p; ++i)
    for (Index f = 0; f < q; ++f) a_rows[static_cast<std::size_t>(i * q + f)] = a0(i, f);
  // column-major q x n storage keeps each b_j contiguous
  std::vector<double> b_cols(b0.data(), b0.data() + b0.size());

  double lambda = config.lambda0;
  double best = std::numeric_limits<double>::infinity();
  model.trace.reserve(config.m);
  const auto start = std::chrono::steady_clock::now();

  Matrix a_cur, b_cur;
  ObjectiveEval eval;
  for (std::size_t it = 1; it <= config.m; ++it) {
    if (config.loss.kind == LossKind::Squared) {
      detail::sweep(x_rows, a_rows, b_cols, p, n, q, lambda, detail::SquaredKernel{}, observer);
    } else {
      const detail::ExpKernel kernel{config.loss.alpha, 1.0 / config.loss.alpha};
      detail::sweep(x_rows, a_rows, b_cols, p, n, q, lambda, kernel, observer);
    }
    a_cur = detail::rows_to_matrix(a_rows, p, q);
    b_cur = Eigen::Map<const Matrix>(b_cols.data(), q, n);
    eval = objective_checked(x.values, a_cur, b_cur, config.loss);
    if (!std::isfinite(eval.value) || eval.value > kDivergenceLimit) {
      throw DivergenceError("objective diverged (learning rate too large?)", it);
    }
    if (eval.value < best) {
      best = eval.value;
    } else {
      lambda *= config.xi;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    model.trace.push_back({it, eval.value, best, lambda, ms});
  }

  model.A = std::move(a_cur);
  model.B = std::move(b_cur);
  model.final_objective = eval.value;
  model.saturated_residuals = eval.saturated;
  return model;
}

/// Runs GMF from the seeded random initialization in `config`.
inline FactorModel train(const DataMatrix& x, const TrainConfig& config) {
  validate(x);
  config.validate();
  auto [a0, b0] = init_factors(x.rows(), x.cols(), config.q, config.seed, config.init_scale);
  return train(x, config, std::move(a0), std::move(b0));
}

/// The p x n product AB.
inline DataMatrix reconstruct(const FactorModel& model) { return DataMatrix(model.A * model.B); }

struct EncodeResult {
  Vector b;
  bool rank_deficient = false;
};

/// Metavariable coordinates of a new p-vector against fixed loadings A.
///
/// Squared loss uses the least-squares solution (minimum-norm when A is rank
/// deficient). Other losses use 200 full-gradient steps from b = 0 with A
/// held fixed; a step that fails to lower the loss is rejected and lambda is
/// multiplied by xi.
inline EncodeResult encode(const Vector& x_new, const Matrix& a, const LossSpec& loss,
                           double lambda0 = 0.01, double xi = 0.75) {
  if (x_new.size() != a.rows()) {
    throw ValidationError("encode: vector length " + std::to_string(x_new.size()) +
                          " does not match loadings rows " + std::to_string(a.rows()));
  }
  if (!x_new.allFinite()) throw ValidationError("encode: non-finite input");
  loss.validate();
  EncodeResult out;
  const Index q = a.cols();
  if (loss.kind == LossKind::Squared) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
    out.rank_deficient = cod.rank() < q;
    out.b = cod.solve(x_new);
    return out;
  }

  constexpr std::size_t kIterations = 200;
  const detail::ExpKernel kernel{loss.alpha, 1.0 / loss.alpha};
  auto total_loss = [&](const Vector& b) {
    const Vector r = x_new - a * b;
    double total = 0.0;
    for (Index i = 0; i < r.size(); ++i) total += kernel.value(r(i));
    return total;
  };
  Vector b = Vector::Zero(q);
  double lambda = lambda0;
  double best = total_loss(b);
  for (std::size_t it = 0; it < kIterations; ++it) {
    const Vector r = x_new - a * b;
    Vector dpsi(r.size());
    for (Index i = 0; i < r.size(); ++i) dpsi(i) = kernel.deriv(r(i));
    const Vector trial = b + lambda * (a.transpose() * dpsi);
    const double value = total_loss(trial);
    if (!std::isfinite(value)) throw DivergenceError("encode diverged", it + 1);
    if (value < best) {
      best = value;
      b = trial;
    } else {
      lambda *= xi;
    }
  }
  out.b = std::move(b);
  return out;
}

/// Encodes every column of `x_new`; returns q x n'.
inline Matrix encode_columns(const Matrix& x_new, const Matrix& a, const LossSpec& loss,
                             double lambda0 = 0.01, double xi = 0.75,
                             bool* rank_deficient = nullptr) {
  if (x_new.rows() != a.rows()) {
    throw ValidationError("encode: matrix has " + std::to_string(x_new.rows()) +
                          " rows, loadings have " + std::to_string(a.rows()));
  }
  Matrix out(a.cols(), x_new.cols());
  if (loss.kind == LossKind::Squared) {
    if (!x_new.allFinite()) throw ValidationError("encode: non-finite input");
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
    if (rank_deficient) *rank_deficient = cod.rank() < a.cols();
    for (Index j = 0; j < x_new.cols(); ++j) out.col(j) = cod.solve(Vector(x_new.col(j)));
    return out;
  }
  for (Index j = 0; j < x_new.cols(); ++j) {
    out.col(j) = encode(x_new.col(j), a, loss, lambda0, xi).b;
  }
  if (rank_deficient) *rank_deficient = false;
  return out;
}

}  // namespace gmf
