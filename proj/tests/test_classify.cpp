#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmf/classify.hpp"

using namespace gmf;

namespace {

// d x n features from per-class means plus gaussian noise.
std::pair<Matrix, LabelVector> blobs(const std::vector<Vector>& means, int per_class, double noise,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise);
  const Index d = means.front().size();
  const int g = static_cast<int>(means.size());
  Matrix f(d, g * per_class);
  std::vector<int> y;
  for (int k = 0; k < g; ++k) {
    for (int r = 0; r < per_class; ++r) {
      const Index j = static_cast<Index>(y.size());
      for (Index i = 0; i < d; ++i) f(i, j) = means[static_cast<std::size_t>(k)](i) + nd(rng);
      y.push_back(k);
    }
  }
  return {f, LabelVector(y, g)};
}

double training_accuracy(const Classifier& c, const Matrix& f, const LabelVector& y) {
  int ok = 0;
  for (Index j = 0; j < f.cols(); ++j) ok += c.predict(f.col(j)) == y[static_cast<std::size_t>(j)];
  return static_cast<double>(ok) / static_cast<double>(f.cols());
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

}  // namespace

TEST(LabelVector, RejectsEmptyClassAndBadIndex) {
  EXPECT_THROW(LabelVector({0, 0, 2}, 3), ValidationError);
  EXPECT_THROW(LabelVector({0, 3}, 2), ValidationError);
  const auto y = LabelVector::from_indices({1, 0, 1});
  EXPECT_EQ(y.g(), 2);
  EXPECT_EQ(y.counts(), (std::vector<std::size_t>{1, 2}));
}

TEST(ClassifierKind, ParseRoundTrip) {
  for (auto k : {ClassifierKind::LinearSvm, ClassifierKind::MultinomialLr,
                 ClassifierKind::NearestShrunkenCentroid}) {
    EXPECT_EQ(parse_classifier_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_classifier_kind("knn"), ValidationError);
}

TEST(Svm, SeparableBlobsFitPerfectly) {
  const auto [f, y] = blobs({vec({-3, -3}), vec({3, 3})}, 20, 0.5, 1);
  EXPECT_EQ(training_accuracy(train_linear_svm(f, y), f, y), 1.0);
}

TEST(Svm, UnitVectorsClassifiedBySign) {
  Matrix f(3, 2);
  f << -1, 1, 0, 0, 0, 0;
  const LabelVector y({0, 1}, 2);
  const auto c = train_linear_svm(f, y);
  EXPECT_LT(c.decision(vec({-1, 0, 0})), 0.0);
  EXPECT_GT(c.decision(vec({1, 0, 0})), 0.0);
  EXPECT_EQ(c.predict(vec({-5, 1, 1})), 0);
  EXPECT_EQ(c.predict(vec({5, 1, 1})), 1);
}

TEST(Svm, XorIsNotLinearlySeparable) {
  Matrix f(2, 4);
  f << 1, -1, 1, -1, 1, -1, -1, 1;
  const LabelVector y({0, 0, 1, 1}, 2);
  const auto c = train_linear_svm(f, y);
  EXPECT_GE(1.0 - training_accuracy(c, f, y), 0.25);
}

TEST(Svm, PositiveScalingOfFeaturesKeepsPredictions) {
  // Separable data, c_reg scaled by s^2; only signs are compared.
  const auto [f, y] = blobs({vec({-3, 0, 1}), vec({3, 1, -1})}, 15, 0.5, 2);
  const auto a = train_linear_svm(f, y);
  for (double s : {0.25, 4.0, 3.0}) {
    const auto b = train_linear_svm(f * s, y, s * s);
    for (Index j = 0; j < f.cols(); ++j) EXPECT_EQ(a.predict(f.col(j)), b.predict(Vector(s * f.col(j))));
  }
}

TEST(Svm, RejectsMulticlassAndDeterministic) {
  const auto [f, y] = blobs({vec({0}), vec({1}), vec({2})}, 3, 0.1, 3);
  EXPECT_THROW(train_linear_svm(f, y), ValidationError);
  const auto [f2, y2] = blobs({vec({-1, 0}), vec({1, 0})}, 5, 1.0, 4);
  const auto a = std::get<SvmModel>(train_linear_svm(f2, y2, 1.0, 50, 7).params());
  const auto b = std::get<SvmModel>(train_linear_svm(f2, y2, 1.0, 50, 7).params());
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Mlr, ThreeClassTriangle) {
  const auto [f, y] = blobs({vec({0, 4}), vec({-4, -3}), vec({4, -3})}, 15, 0.7, 5);
  const auto c = train_multinomial_lr(f, y);
  EXPECT_EQ(training_accuracy(c, f, y), 1.0);
}

TEST(Mlr, ProbabilitiesFormSimplex) {
  const auto [f, y] = blobs({vec({0, 1}), vec({1, 0}), vec({1, 1})}, 6, 1.0, 6);
  const auto c = train_multinomial_lr(f, y);
  for (const Vector& x : {vec({0, 0}), vec({10, -3}), vec({-1e3, 1e3})}) {
    const Vector pr = c.probabilities(x);
    EXPECT_NEAR(pr.sum(), 1.0, 1e-12);
    EXPECT_GE(pr.minCoeff(), 0.0);
  }
}

TEST(Mlr, ConstantFeaturesGiveClassFrequencies) {
  const Matrix f = Matrix::Zero(2, 8);
  const LabelVector y({0, 0, 0, 0, 0, 0, 1, 1}, 2);
  const auto c = train_multinomial_lr(f, y, 0.0, 5000);
  const Vector pr = c.probabilities(vec({0, 0}));
  EXPECT_NEAR(pr(0), 0.75, 1e-6);
  EXPECT_NEAR(pr(1), 0.25, 1e-6);
}

// Frozen from tests/oracles/nsc_oracle.py.
TEST(Nsc, ShrunkenOffsetsMatchOracle) {
  Matrix f(1, 6);
  f << -3, -2, -1, 1, 2, 3;
  const LabelVector y({0, 0, 0, 1, 1, 1}, 2);
  const auto c = train_nsc(f, y, 1.0);
  const auto& m = std::get<NscModel>(c.params());
  EXPECT_NEAR(m.shrunk_offsets(0, 0), -1.4494897427831779, 1e-12);
  EXPECT_NEAR(m.shrunk_offsets(0, 1), 1.4494897427831779, 1e-12);
  EXPECT_NEAR(m.centroids(0, 0), -1.1835034190722737, 1e-12);
  EXPECT_NEAR(m.centroids(0, 1), 1.1835034190722737, 1e-12);
  const auto raw = std::get<NscModel>(train_nsc(f, y, 0.0).params());
  EXPECT_NEAR(raw.shrunk_offsets(0, 0), -2.449489742783178, 1e-12);
}

TEST(Nsc, ZeroThresholdIsNearestCentroid) {
  const auto [f, y] = blobs({vec({-2, 1}), vec({2, -1})}, 10, 0.5, 7);
  const auto c = train_nsc(f, y, 0.0);
  const auto& m = std::get<NscModel>(c.params());
  for (int k = 0; k < 2; ++k) {
    Vector mean = Vector::Zero(2);
    for (Index j = 0; j < f.cols(); ++j)
      if (y[static_cast<std::size_t>(j)] == k) mean += f.col(j);
    EXPECT_LE((m.centroids.col(k) - mean / 10.0).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_EQ(c.selected_features(), 2);
}

TEST(Nsc, HugeThresholdPredictsLargestPrior) {
  const auto [f, y] = blobs({vec({-2, 1}), vec({2, -1})}, 10, 0.5, 8);
  Matrix f2(2, 21);
  f2 << f, vec({2, -1});
  std::vector<int> a = y.assignments();
  a.push_back(1);
  const LabelVector y2(a, 2);
  const auto c = train_nsc(f2, y2, 1e9);
  EXPECT_EQ(c.selected_features(), 0);
  for (Index j = 0; j < f2.cols(); ++j) EXPECT_EQ(c.predict(f2.col(j)), 1);
}

TEST(Nsc, SelectedFeaturesNonIncreasingInThreshold) {
  const auto [f, y] = blobs({vec({-2, 1, 0, 0.3, 5}), vec({2, -1, 0.1, 0, 4}), vec({0, 0, 0, 0, 6})}, 8,
                            1.0, 9);
  Index prev = f.rows();
  for (double delta = 0.0; delta <= 8.0; delta += 0.25) {
    const Index ps = train_nsc(f, y, delta).selected_features();
    EXPECT_LE(ps, prev);
    prev = ps;
  }
  EXPECT_EQ(prev, 0);
}

TEST(Fit, DispatchAndDimensionCheck) {
  const auto [f, y] = blobs({vec({-3, 0}), vec({3, 0})}, 5, 0.3, 10);
  for (auto k : {ClassifierKind::LinearSvm, ClassifierKind::MultinomialLr,
                 ClassifierKind::NearestShrunkenCentroid}) {
    ClassifierSpec spec;
    spec.kind = k;
    const auto c = fit(spec, f, y);
    EXPECT_EQ(c.kind(), k);
    EXPECT_EQ(training_accuracy(c, f, y), 1.0);
    EXPECT_THROW(c.predict(vec({1, 2, 3})), ValidationError);
  }
  EXPECT_THROW(fit({}, f, LabelVector({0, 1}, 2)), ValidationError);
}
