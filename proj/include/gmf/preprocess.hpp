#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gmf/error.hpp"
#include "gmf/matrix.hpp"

namespace gmf {

struct FilterReport {
  std::vector<Index> kept_rows;  // original row indices, strictly increasing
  double floor = 1.0;
  double ceil = 20000.0;
  double ratio_min = 2.0;
  double span_min = 100.0;
};

struct FilterOptions {
  double floor = 1.0;
  double ceil = 20000.0;
  double ratio_min = 2.0;
  double span_min = 100.0;
  bool log = true;
};

/// Clamp to [floor, ceil], drop rows whose max/min <= ratio_min or
/// max - min <= span_min, then take natural logs of what remains.
inline std::pair<DataMatrix, FilterReport> threshold_filter_log(const DataMatrix& x,
                                                                const FilterOptions& opt = {}) {
  validate(x);
  if (!(opt.floor > 0.0)) throw ValidationError("floor must be positive (log and ratio need it)");
  if (!(opt.ceil >= opt.floor)) throw ValidationError("ceil must be >= floor");

  FilterReport report{{}, opt.floor, opt.ceil, opt.ratio_min, opt.span_min};
  const Matrix clamped = x.values.cwiseMax(opt.floor).cwiseMin(opt.ceil);
  for (Index i = 0; i < clamped.rows(); ++i) {
    const double hi = clamped.row(i).maxCoeff();
    const double lo = clamped.row(i).minCoeff();
    if (hi / lo <= opt.ratio_min || hi - lo <= opt.span_min) continue;
    report.kept_rows.push_back(i);
  }
  if (report.kept_rows.empty()) throw ValidationError("filter removed every row");

  DataMatrix out;
  out.values.resize(static_cast<Index>(report.kept_rows.size()), clamped.cols());
  for (std::size_t k = 0; k < report.kept_rows.size(); ++k) {
    out.values.row(static_cast<Index>(k)) = clamped.row(report.kept_rows[k]);
    if (x.has_row_ids()) out.row_ids.push_back(x.row_ids[static_cast<std::size_t>(report.kept_rows[k])]);
  }
  if (opt.log) out.values = out.values.array().log().matrix();
  out.col_ids = x.col_ids;
  return {std::move(out), std::move(report)};
}

/// Mean and population standard deviation of a set of values.
struct Moments {
  double mean = 0.0;
  double sd = 1.0;
  bool degenerate = false;  // zero variance; sd forced to 1
};

template <typename Derived>
Moments moments(const Eigen::DenseBase<Derived>& v) {
  Moments m;
  const double count = static_cast<double>(v.size());
  m.mean = v.sum() / count;
  double ss = 0.0;
  for (Index k = 0; k < v.size(); ++k) {
    const double d = v(k) - m.mean;
    ss += d * d;
  }
  m.sd = std::sqrt(ss / count);
  if (!(m.sd > 0.0)) {
    m.sd = 1.0;
    m.degenerate = true;
  }
  return m;
}

struct NormalizeReport {
  std::vector<Index> constant_columns;
  std::vector<Index> constant_rows;
};

/// Standardize every column to mean 0, sd 1 (population sd). A constant
/// column becomes all zeros.
inline Matrix standardize_columns(const Matrix& x, std::vector<Index>* constant = nullptr) {
  Matrix out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const Moments m = moments(x.col(j));
    if (m.degenerate && constant) constant->push_back(j);
    out.col(j) = (x.col(j).array() - m.mean) / m.sd;
  }
  return out;
}

/// Per-row moments of `x`, as used for the second pass of double normalization.
inline std::vector<Moments> row_moments(const Matrix& x) {
  std::vector<Moments> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) out.push_back(moments(x.row(i)));
  return out;
}

inline Matrix apply_row_moments(const Matrix& x, const std::vector<Moments>& rows) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Moments& m = rows[static_cast<std::size_t>(i)];
    out.row(i) = (x.row(i).array() - m.mean) / m.sd;
  }
  return out;
}

/// One column-standardization pass followed by one row-standardization pass.
inline DataMatrix double_normalize(const DataMatrix& x, NormalizeReport* report = nullptr) {
  validate(x);
  if (x.rows() < 2 || x.cols() < 2) {
    throw ValidationError("double normalization needs at least 2 rows and 2 columns");
  }
  std::vector<Index> constant_cols;
  const Matrix cols = standardize_columns(x.values, &constant_cols);
  const auto rows = row_moments(cols);
  DataMatrix out(apply_row_moments(cols, rows), x.row_ids, x.col_ids);
  if (report) {
    report->constant_columns = std::move(constant_cols);
    report->constant_rows.clear();
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].degenerate) report->constant_rows.push_back(static_cast<Index>(i));
  }
  return out;
}

/// Subtract the grand mean.
inline DataMatrix mean_center(const DataMatrix& x) {
  validate(x);
  const double mean = x.values.mean();
  DataMatrix out(x);
  out.values.array() -= mean;
  return out;
}

}  // namespace gmf
