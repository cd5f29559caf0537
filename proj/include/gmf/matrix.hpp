#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "gmf/error.hpp"

namespace gmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense p x n observation matrix: rows are variables (genes), columns are
/// samples (tissues). Optional identifiers travel with the values.
struct DataMatrix {
  Matrix values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;

  DataMatrix() = default;
  explicit DataMatrix(Matrix v) : values(std::move(v)) {}
  DataMatrix(Matrix v, std::vector<std::string> rows, std::vector<std::string> cols)
      : values(std::move(v)), row_ids(std::move(rows)), col_ids(std::move(cols)) {}

  Index rows() const noexcept { return values.rows(); }
  Index cols() const noexcept { return values.cols(); }
  bool has_row_ids() const noexcept { return !row_ids.empty(); }
  bool has_col_ids() const noexcept { return !col_ids.empty(); }
};

namespace detail {

inline void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw ValidationError(std::string("duplicate ") + what + " id '" + id + "'");
    }
  }
}

}  // namespace detail

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Throws ValidationError unless the matrix satisfies the DataMatrix invariants.
inline void validate(const DataMatrix& x) {
  if (x.rows() < 1 || x.cols() < 1) {
    throw ValidationError("data matrix must have at least one row and one column");
  }
  if (!x.values.allFinite()) {
    for (Index j = 0; j < x.cols(); ++j) {
      for (Index i = 0; i < x.rows(); ++i) {
        if (!std::isfinite(x.values(i, j))) {
          throw ValidationError("non-finite entry at row " + std::to_string(i) + ", column " +
                                std::to_string(j));
        }
      }
    }
  }
  if (x.has_row_ids()) {
    if (static_cast<Index>(x.row_ids.size()) != x.rows()) {
      throw ValidationError("row id count does not match row count");
    }
    detail::check_unique(x.row_ids, "row");
  }
  if (x.has_col_ids()) {
    if (static_cast<Index>(x.col_ids.size()) != x.cols()) {
      throw ValidationError("column id count does not match column count");
    }
    detail::check_unique(x.col_ids, "column");
  }
}

/// Copy of `x` without the listed columns (indices must be sorted, unique).
inline Matrix drop_columns(const Matrix& x, const std::vector<Index>& dropped) {
  Matrix out(x.rows(), x.cols() - static_cast<Index>(dropped.size()));
  Index k = 0;
  std::size_t d = 0;
  for (Index j = 0; j < x.cols(); ++j) {
    if (d < dropped.size() && dropped[d] == j) {
      ++d;
      continue;
    }
    out.col(k++) = x.col(j);
  }
  return out;
}

inline Matrix select_columns(const Matrix& x, const std::vector<Index>& kept) {
  Matrix out(x.rows(), static_cast<Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) out.col(static_cast<Index>(k)) = x.col(kept[k]);
  return out;
}

// splitmix64 finalizer; used to derive independent seeds from structured keys.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw. Unlike
/// std::uniform_real_distribution this is identical across standard libraries.
inline double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace gmf
