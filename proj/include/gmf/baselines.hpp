#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gmf/error.hpp"
#include "gmf/matrix.hpp"

namespace gmf {

/// Rank-q truncated SVD: X ~ L diag(d) R^T.
struct SvdFactors {
  Matrix L;  // p x q, orthonormal columns
  Vector d;  // q singular values, non-increasing
  Matrix R;  // n x q, orthonormal columns
  bool converged = true;
  std::size_t iterations = 0;

  Matrix approximation() const { return L * d.asDiagonal() * R.transpose(); }
};

struct SvdOptions {
  std::size_t max_iter = 1000;
  double tol = 1e-13;  // on successive singular values, relative to d_1
};

namespace detail {

// Thin orthonormal basis for the columns of z (Householder).
inline Matrix orthonormal_basis(const Matrix& z) {
  Eigen::HouseholderQR<Matrix> qr(z);
  return qr.householderQ() * Matrix::Identity(z.rows(), z.cols());
}

// Extend `basis` (first `filled` columns valid) to an orthonormal set by
// Gram-Schmidt against coordinate vectors.
inline void complete_orthonormal(Matrix& basis, Index filled) {
  const Index dim = basis.rows();
  Index next_unit = 0;
  for (Index c = filled; c < basis.cols(); ++c) {
    while (next_unit < dim) {
      Vector v = Vector::Unit(dim, next_unit++);
      for (int pass = 0; pass < 2; ++pass)
        for (Index k = 0; k < c; ++k) v -= basis.col(k).dot(v) * basis.col(k);
      const double nv = v.norm();
      if (nv > 1e-8) {
        basis.col(c) = v / nv;
        break;
      }
    }
  }
}

}  // namespace detail

/// Top-q singular triplets by blocked subspace iteration with Rayleigh-Ritz
/// on the smaller Gram matrix (X^T X or X X^T).
inline SvdFactors truncated_svd(const Matrix& x, Index q, const SvdOptions& opt = {}) {
  const Index p = x.rows(), n = x.cols();
  if (q < 1 || q > std::min(p, n)) {
    throw ValidationError("truncated_svd: q = " + std::to_string(q) + " must lie in [1, min(p, n) = " +
                          std::to_string(std::min(p, n)) + "]");
  }
  if (!x.allFinite()) throw ValidationError("truncated_svd: non-finite entries");

  const bool right = n <= p;  // iterate on the n x n Gram matrix
  const Matrix gram = right ? Matrix(x.transpose() * x) : Matrix(x * x.transpose());
  const Index dim = gram.rows();
  const Index block = std::min(dim, std::max<Index>(2 * q, q + 8));

  SvdFactors out;
  Matrix basis;
  if (block == dim) {
    basis = Matrix::Identity(dim, dim);
  } else {
    std::mt19937_64 rng(0x5eedULL);
    Matrix start(dim, block);
    for (Index c = 0; c < block; ++c)
      for (Index r = 0; r < dim; ++r) start(r, c) = 2.0 * unit_interval(rng()) - 1.0;
    basis = detail::orthonormal_basis(start);
  }

  Vector ritz = Vector::Zero(block);
  Vector previous = Vector::Constant(q, -1.0);
  out.converged = false;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    if (it > 1) basis = detail::orthonormal_basis(gram * basis);
    const Matrix h = basis.transpose() * gram * basis;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    // ascending -> descending
    const Matrix vecs = eig.eigenvectors().rowwise().reverse();
    ritz = eig.eigenvalues().reverse();
    basis = basis * vecs;
    out.iterations = it;

    Vector current(q);
    for (Index k = 0; k < q; ++k) current(k) = std::sqrt(std::max(ritz(k), 0.0));
    const double scale = std::max(current(0), std::numeric_limits<double>::min());
    const double change = (current - previous).cwiseAbs().maxCoeff() / scale;
    previous = current;
    if (block == dim || change < opt.tol) {
      out.converged = true;
      break;
    }
  }

  out.d = previous;
  const Matrix side = basis.leftCols(q);
  Matrix other = right ? Matrix(x * side) : Matrix(x.transpose() * side);
  const double cutoff = out.d(0) * 1e-13;
  Index nonzero = 0;
  for (Index k = 0; k < q; ++k) {
    if (out.d(k) > cutoff && out.d(k) > 0.0) {
      other.col(k) /= out.d(k);
      ++nonzero;
    } else {
      out.d(k) = 0.0;
    }
  }
  detail::complete_orthonormal(other, nonzero);
  if (right) {
    out.R = side;
    out.L = std::move(other);
  } else {
    out.L = side;
    out.R = std::move(other);
  }
  return out;
}

inline SvdFactors truncated_svd(const DataMatrix& x, Index q, const SvdOptions& opt = {}) {
  return truncated_svd(x.values, q, opt);
}

/// ||X - L D R^T||^2 of the rank-q truncation, summed elementwise.
inline double svd_residual(const Matrix& x, Index q, const SvdOptions& opt = {}) {
  const SvdFactors f = truncated_svd(x, q, opt);
  return (x - f.approximation()).squaredNorm();
}

inline double svd_residual(const DataMatrix& x, Index q, const SvdOptions& opt = {}) {
  return svd_residual(x.values, q, opt);
}

struct NmfFactors {
  Matrix W;  // p x q, nonnegative
  Matrix H;  // q x n, nonnegative
  std::vector<double> objective_trace;  // ||X - WH||^2 after each iteration
};

inline constexpr double kNmfEpsilon = 1e-12;

/// Lee-Seung multiplicative updates for squared error, from given factors.
inline NmfFactors nmf(const Matrix& x, Matrix w, Matrix h, std::size_t iterations) {
  if ((x.array() < 0.0).any()) throw ValidationError("nmf: input has negative entries");
  if (w.rows() != x.rows() || h.cols() != x.cols() || w.cols() != h.rows()) {
    throw ValidationError("nmf: factor dimensions do not match X");
  }
  if ((w.array() < 0.0).any() || (h.array() < 0.0).any()) {
    throw ValidationError("nmf: initial factors must be nonnegative");
  }
  NmfFactors out;
  out.objective_trace.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    const Matrix wt_x = w.transpose() * x;
    const Matrix wt_w_h = (w.transpose() * w) * h;
    h.array() *= wt_x.array() / (wt_w_h.array() + kNmfEpsilon);
    const Matrix x_ht = x * h.transpose();
    const Matrix w_h_ht = w * (h * h.transpose());
    w.array() *= x_ht.array() / (w_h_ht.array() + kNmfEpsilon);
    out.objective_trace.push_back((x - w * h).squaredNorm());
  }
  out.W = std::move(w);
  out.H = std::move(h);
  return out;
}

/// NMF from a seeded random start; entries uniform on [0, sqrt(mean(X)/q)).
inline NmfFactors nmf(const Matrix& x, Index q, std::size_t iterations, std::uint64_t seed) {
  if (q < 1) throw ValidationError("nmf: q must be >= 1");
  if ((x.array() < 0.0).any()) throw ValidationError("nmf: input has negative entries");
  std::mt19937_64 rng(seed);
  const double scale = std::sqrt(std::max(x.mean(), 1e-12) / static_cast<double>(q));
  Matrix w(x.rows(), q), h(q, x.cols());
  for (Index i = 0; i < w.rows(); ++i)
    for (Index f = 0; f < q; ++f) w(i, f) = unit_interval(rng()) * scale;
  for (Index f = 0; f < q; ++f)
    for (Index j = 0; j < h.cols(); ++j) h(f, j) = unit_interval(rng()) * scale;
  return nmf(x, std::move(w), std::move(h), iterations);
}

inline NmfFactors nmf(const DataMatrix& x, Index q, std::size_t iterations, std::uint64_t seed) {
  return nmf(x.values, q, iterations, seed);
}

}  // namespace gmf
