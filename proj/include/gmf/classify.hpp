#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "gmf/error.hpp"
#include "gmf/matrix.hpp"

namespace gmf {

/// Class assignment of n samples to g classes, each class non-empty.
class LabelVector {
 public:
  LabelVector() = default;

  LabelVector(std::vector<int> assignments, int g) : assignments_(std::move(assignments)), g_(g) {
    if (g_ < 1) throw ValidationError("label vector needs at least one class");
    counts_.assign(static_cast<std::size_t>(g_), 0);
    for (int c : assignments_) {
      if (c < 0 || c >= g_) {
        throw ValidationError("class index " + std::to_string(c) + " outside [0, " +
                              std::to_string(g_) + ")");
      }
      ++counts_[static_cast<std::size_t>(c)];
    }
    for (int k = 0; k < g_; ++k) {
      if (counts_[static_cast<std::size_t>(k)] == 0) {
        throw ValidationError("class " + std::to_string(k) + " has no samples");
      }
    }
  }

  /// Infers g as 1 + the largest index.
  static LabelVector from_indices(std::vector<int> assignments) {
    const int g = assignments.empty() ? 0 : *std::max_element(assignments.begin(), assignments.end()) + 1;
    return LabelVector(std::move(assignments), g);
  }

  std::size_t size() const noexcept { return assignments_.size(); }
  int g() const noexcept { return g_; }
  int operator[](std::size_t j) const { return assignments_[j]; }
  const std::vector<int>& assignments() const noexcept { return assignments_; }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }

 private:
  std::vector<int> assignments_;
  int g_ = 0;
  std::vector<std::size_t> counts_;
};

enum class ClassifierKind { LinearSvm, MultinomialLr, NearestShrunkenCentroid };

inline std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::LinearSvm: return "svm";
    case ClassifierKind::MultinomialLr: return "mlr";
    case ClassifierKind::NearestShrunkenCentroid: return "nsc";
  }
  return "?";
}

inline ClassifierKind parse_classifier_kind(const std::string& s) {
  if (s == "svm") return ClassifierKind::LinearSvm;
  if (s == "mlr" || s == "lr") return ClassifierKind::MultinomialLr;
  if (s == "nsc") return ClassifierKind::NearestShrunkenCentroid;
  throw ValidationError("unknown classifier '" + s + "' (expected svm, mlr or nsc)");
}

/// Classifier choice plus every hyperparameter any of the kinds uses.
struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::LinearSvm;
  double c_reg = 1.0;        // SVM regularization
  std::size_t epochs = 200;  // SVM passes over the data
  std::uint64_t seed = 0;    // SVM sample order
  double ridge = 1e-4;       // MLR weight penalty
  std::size_t iterations = 500;  // MLR gradient steps
  double delta = 0.0;        // NSC shrinkage threshold
};

struct SvmModel {
  Vector w;
  double bias = 0.0;
};

struct MlrModel {
  Matrix weights;  // g x d, on standardized features
  Vector bias;     // g
  Vector mean;     // d, feature standardization
  Vector scale;    // d
};

struct NscModel {
  Matrix centroids;   // d x g shrunken centroids
  Vector overall;     // d
  Vector scale;       // d, s_i + s0
  Vector log_prior;   // g
  Matrix shrunk_offsets;  // d x g, d'_ik
  Index selected = 0;     // features with any nonzero shrunken offset
  double delta = 0.0;
};

/// A trained classifier. Immutable after construction; predict is const.
class Classifier {
 public:
  using Params = std::variant<SvmModel, MlrModel, NscModel>;

  Classifier(ClassifierKind kind, Params params, ClassifierSpec config, Index dim, int g)
      : kind_(kind), params_(std::move(params)), config_(config), dim_(dim), g_(g) {}

  ClassifierKind kind() const noexcept { return kind_; }
  const ClassifierSpec& training_config() const noexcept { return config_; }
  Index dimension() const noexcept { return dim_; }
  int classes() const noexcept { return g_; }
  const Params& params() const noexcept { return params_; }

  /// SVM decision value w.x + b.
  double decision(const Vector& x) const {
    check_dim(x);
    const auto& m = std::get<SvmModel>(params_);
    return m.w.dot(x) + m.bias;
  }

  /// MLR class probabilities.
  Vector probabilities(const Vector& x) const {
    check_dim(x);
    const auto& m = std::get<MlrModel>(params_);
    const Vector z = ((x - m.mean).array() / m.scale.array()).matrix();
    return softmax(m.weights * z + m.bias);
  }

  /// NSC discriminant scores; the predicted class minimizes them.
  Vector nsc_scores(const Vector& x) const {
    check_dim(x);
    const auto& m = std::get<NscModel>(params_);
    Vector scores(g_);
    for (int k = 0; k < g_; ++k) {
      const Vector diff = ((x - m.centroids.col(k)).array() / m.scale.array()).matrix();
      scores(k) = diff.squaredNorm() - 2.0 * m.log_prior(k);
    }
    return scores;
  }

  /// Number of features the NSC model still uses (p_s).
  Index selected_features() const { return std::get<NscModel>(params_).selected; }

  int predict(const Vector& x) const {
    switch (kind_) {
      case ClassifierKind::LinearSvm: return decision(x) > 0.0 ? 1 : 0;
      case ClassifierKind::MultinomialLr: return argmax(probabilities(x));
      case ClassifierKind::NearestShrunkenCentroid: {
        const Vector s = nsc_scores(x);
        int best = 0;
        for (int k = 1; k < g_; ++k)
          if (s(k) < s(best)) best = k;
        return best;
      }
    }
    return 0;
  }

  static Vector softmax(const Vector& s) {
    const double top = s.maxCoeff();
    Vector e = (s.array() - top).exp().matrix();
    return e / e.sum();
  }

 private:
  void check_dim(const Vector& x) const {
    if (x.size() != dim_) {
      throw ValidationError("classifier expects " + std::to_string(dim_) + " features, got " +
                            std::to_string(x.size()));
    }
  }
  static int argmax(const Vector& v) {
    int best = 0;
    for (Index k = 1; k < v.size(); ++k)
      if (v(k) > v(best)) best = static_cast<int>(k);
    return best;
  }

  ClassifierKind kind_;
  Params params_;
  ClassifierSpec config_;
  Index dim_;
  int g_;
};

namespace detail {

inline void check_training_shape(const Matrix& f, const LabelVector& y) {
  if (static_cast<std::size_t>(f.cols()) != y.size()) {
    throw ValidationError("feature matrix has " + std::to_string(f.cols()) + " samples but " +
                          std::to_string(y.size()) + " labels");
  }
  if (f.cols() < 1 || f.rows() < 1) throw ValidationError("empty feature matrix");
  if (!f.allFinite()) throw ValidationError("non-finite feature value");
}

// Fisher-Yates driven by mt19937_64 bits, identical on every standard library.
inline void shuffle(std::vector<Index>& v, std::mt19937_64& rng) {
  for (std::size_t k = v.size(); k > 1; --k) {
    const auto r = static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(k));
    std::swap(v[k - 1], v[std::min(r, k - 1)]);
  }
}

}  // namespace detail

/// Linear SVM by hinge-loss subgradient descent (Pegasos schedule, step
/// 1 / (c_reg t)). The bias is not regularized and takes steps of 1 / t, so
/// scaling features by s with c_reg scaled by s^2 leaves every sign unchanged.
/// Features are d x n.
inline Classifier train_linear_svm(const Matrix& f, const LabelVector& y, double c_reg = 1.0,
                                   std::size_t epochs = 200, std::uint64_t seed = 0) {
  detail::check_training_shape(f, y);
  if (y.g() != 2) {
    throw ValidationError("linear SVM handles exactly 2 classes (got " + std::to_string(y.g()) +
                          "); use multinomial logistic regression");
  }
  if (!(c_reg > 0.0)) throw ValidationError("SVM regularization must be > 0");

  SvmModel m{Vector::Zero(f.rows()), 0.0};
  std::mt19937_64 rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(f.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  double t = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    detail::shuffle(order, rng);
    for (Index j : order) {
      t += 1.0;
      const double eta = 1.0 / (c_reg * t);
      const double label = y[static_cast<std::size_t>(j)] == 1 ? 1.0 : -1.0;
      const double margin = label * (m.w.dot(f.col(j)) + m.bias);
      m.w *= (1.0 - eta * c_reg);
      if (margin < 1.0) {
        m.w += (eta * label) * f.col(j);
        m.bias += label / t;
      }
    }
  }
  ClassifierSpec cfg;
  cfg.kind = ClassifierKind::LinearSvm;
  cfg.c_reg = c_reg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  return Classifier(ClassifierKind::LinearSvm, std::move(m), cfg, f.rows(), 2);
}

/// Softmax regression by full-batch gradient descent on the mean negative
/// log-likelihood plus (ridge / 2) ||W||^2. Features are standardized
/// internally; the step is 1 / (Lipschitz bound of the gradient).
inline Classifier train_multinomial_lr(const Matrix& f, const LabelVector& y, double ridge = 1e-4,
                                       std::size_t iterations = 500) {
  detail::check_training_shape(f, y);
  if (y.g() < 2) throw ValidationError("logistic regression needs at least 2 classes");
  if (!(ridge >= 0.0)) throw ValidationError("ridge must be >= 0");

  const Index d = f.rows(), n = f.cols();
  const int g = y.g();
  MlrModel m;
  m.mean = f.rowwise().mean();
  m.scale.resize(d);
  for (Index i = 0; i < d; ++i) {
    const double var = (f.row(i).array() - m.mean(i)).square().mean();
    m.scale(i) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  const Matrix z = ((f.colwise() - m.mean).array().colwise() / m.scale.array()).matrix();

  double max_norm = 0.0;
  for (Index j = 0; j < n; ++j) max_norm = std::max(max_norm, 1.0 + z.col(j).squaredNorm());
  const double step = 1.0 / (0.5 * max_norm + ridge);

  m.weights = Matrix::Zero(g, d);
  m.bias = Vector::Zero(g);
  Matrix target = Matrix::Zero(g, n);
  for (Index j = 0; j < n; ++j) target(y[static_cast<std::size_t>(j)], j) = 1.0;

  for (std::size_t it = 0; it < iterations; ++it) {
    Matrix scores = m.weights * z;
    scores.colwise() += m.bias;
    Matrix prob(g, n);
    for (Index j = 0; j < n; ++j) prob.col(j) = Classifier::softmax(scores.col(j));
    const Matrix resid = prob - target;  // d(NLL)/d(scores)
    const Matrix grad_w = resid * z.transpose() / static_cast<double>(n) + ridge * m.weights;
    const Vector grad_b = resid.rowwise().mean();
    if (!grad_w.allFinite() || !grad_b.allFinite()) {
      throw DivergenceError("logistic regression gradient is not finite", it + 1);
    }
    m.weights -= step * grad_w;
    m.bias -= step * grad_b;
  }
  ClassifierSpec cfg;
  cfg.kind = ClassifierKind::MultinomialLr;
  cfg.ridge = ridge;
  cfg.iterations = iterations;
  return Classifier(ClassifierKind::MultinomialLr, std::move(m), cfg, d, g);
}

/// Nearest shrunken centroids. Class centroids are soft-thresholded toward
/// the overall centroid in units of m_k (s_i + s0), where s_i is the pooled
/// within-class sd, s0 its median over features and
/// m_k = sqrt(1/n_k - 1/n). Classification minimizes the standardized
/// squared distance minus 2 log(prior), priors being class frequencies.
inline Classifier train_nsc(const Matrix& f, const LabelVector& y, double delta = 0.0) {
  detail::check_training_shape(f, y);
  if (!(delta >= 0.0)) throw ValidationError("NSC threshold must be >= 0");
  const Index d = f.rows(), n = f.cols();
  const int g = y.g();

  Matrix centroid = Matrix::Zero(d, g);
  for (Index j = 0; j < n; ++j) centroid.col(y[static_cast<std::size_t>(j)]) += f.col(j);
  for (int k = 0; k < g; ++k) centroid.col(k) /= static_cast<double>(y.counts()[static_cast<std::size_t>(k)]);

  NscModel m;
  m.delta = delta;
  m.overall = f.rowwise().mean();
  Vector within = Vector::Zero(d);
  for (Index j = 0; j < n; ++j) {
    within += (f.col(j) - centroid.col(y[static_cast<std::size_t>(j)])).array().square().matrix();
  }
  const Index dof = n - g;
  Vector s = dof > 0 ? Vector((within / static_cast<double>(dof)).array().sqrt()) : Vector(Vector::Zero(d));
  std::vector<double> sorted(s.data(), s.data() + d);
  std::sort(sorted.begin(), sorted.end());
  const double s0 = d % 2 == 1 ? sorted[static_cast<std::size_t>(d / 2)]
                               : 0.5 * (sorted[static_cast<std::size_t>(d / 2 - 1)] +
                                        sorted[static_cast<std::size_t>(d / 2)]);
  m.scale = (s.array() + s0).matrix();
  for (Index i = 0; i < d; ++i)
    if (!(m.scale(i) > 0.0)) m.scale(i) = 1.0;

  m.centroids.resize(d, g);
  m.shrunk_offsets.resize(d, g);
  m.log_prior.resize(g);
  std::vector<bool> used(static_cast<std::size_t>(d), false);
  for (int k = 0; k < g; ++k) {
    const double nk = static_cast<double>(y.counts()[static_cast<std::size_t>(k)]);
    const double mk = std::sqrt(std::max(1.0 / nk - 1.0 / static_cast<double>(n), 0.0));
    m.log_prior(k) = std::log(nk / static_cast<double>(n));
    for (Index i = 0; i < d; ++i) {
      const double unit = mk * m.scale(i);
      const double dk = unit > 0.0 ? (centroid(i, k) - m.overall(i)) / unit : 0.0;
      const double shrunk = std::copysign(std::max(std::abs(dk) - delta, 0.0), dk);
      m.shrunk_offsets(i, k) = shrunk;
      m.centroids(i, k) = m.overall(i) + unit * shrunk;
      if (shrunk != 0.0) used[static_cast<std::size_t>(i)] = true;
    }
  }
  m.selected = static_cast<Index>(std::count(used.begin(), used.end(), true));
  ClassifierSpec cfg;
  cfg.kind = ClassifierKind::NearestShrunkenCentroid;
  cfg.delta = delta;
  return Classifier(ClassifierKind::NearestShrunkenCentroid, std::move(m), cfg, d, g);
}

/// Dispatch on spec.kind.
inline Classifier fit(const ClassifierSpec& spec, const Matrix& f, const LabelVector& y) {
  switch (spec.kind) {
    case ClassifierKind::LinearSvm: return train_linear_svm(f, y, spec.c_reg, spec.epochs, spec.seed);
    case ClassifierKind::MultinomialLr: return train_multinomial_lr(f, y, spec.ridge, spec.iterations);
    case ClassifierKind::NearestShrunkenCentroid: return train_nsc(f, y, spec.delta);
  }
  throw ValidationError("unknown classifier kind");
}

inline int predict(const Classifier& model, const Vector& x) { return model.predict(x); }

}  // namespace gmf
