// Factorize a small planted matrix, compare with the truncated SVD and
// estimate the leave-one-out error of a classifier on the metavariables.

#include <iostream>
#include <random>

#include "gmf/gmf.hpp"

int main() {
  const gmf::Index p = 40, per_class = 6, q = 2;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.3);

  gmf::Matrix x(p, 2 * per_class);
  std::vector<int> labels;
  for (gmf::Index j = 0; j < x.cols(); ++j) {
    const int cls = j < per_class ? 0 : 1;
    labels.push_back(cls);
    for (gmf::Index i = 0; i < p; ++i) x(i, j) = (i < 10 ? (cls == 0 ? -1.5 : 1.5) : 0.0) + noise(rng);
  }

  gmf::TrainConfig cfg;
  cfg.q = q;
  cfg.m = 200;
  const gmf::FactorModel model = gmf::train(gmf::DataMatrix(x), cfg);
  const double gmf_residual = (x - model.A * model.B).squaredNorm();
  std::cout << "GMF residual " << gmf_residual << ", SVD floor " << gmf::svd_residual(x, q) << '\n';

  gmf::EvalConfig eval;
  eval.classifier.kind = gmf::ClassifierKind::LinearSvm;
  eval.train = cfg;
  const gmf::LabelVector y(labels, 2);
  const auto est1 = gmf::e1(x, y, q, eval);
  const auto est2 = gmf::e2(x, y, q, eval);
  std::cout << "e1 = " << est1.rate << " (" << est1.misclassified << "), e2 = " << est2.rate << " ("
            << est2.misclassified << ")\n";
}
