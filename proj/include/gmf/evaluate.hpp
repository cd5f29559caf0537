#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gmf/classify.hpp"
#include "gmf/error.hpp"
#include "gmf/factorize.hpp"
#include "gmf/matrix.hpp"
#include "gmf/preprocess.hpp"

namespace gmf {

struct SampleResult {
  Index sample;
  int truth;
  int predicted;
};

/// One train/test split: which columns were held out, which were used to
/// fit the factorization and classifier, and with what q and seed.
struct FoldRecord {
  std::vector<Index> held_out;
  std::vector<Index> training;
  Index q = 0;
  std::uint64_t seed = 0;
  // e1 factorizes the full matrix, so held-out columns do reach the model.
  bool factorization_saw_held_out = false;
};

struct ErrorEstimate {
  double rate = 0.0;
  std::size_t misclassified = 0;
  std::size_t n_evaluated = 0;
  std::vector<SampleResult> per_sample;  // ordered by sample index
  std::vector<FoldRecord> folds;
  std::vector<std::string> warnings;
};

/// Candidate values of q, strictly increasing, all >= 1.
struct QGrid {
  std::vector<Index> candidates;

  void validate() const {
    if (candidates.empty()) throw ValidationError("q grid is empty");
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (candidates[k] < 1) throw ValidationError("q grid values must be >= 1");
      if (k > 0 && candidates[k] <= candidates[k - 1]) {
        throw ValidationError("q grid must be strictly increasing");
      }
    }
  }

  /// "lo:hi:step", "lo:hi" or a comma-separated list.
  static QGrid parse(const std::string& text) {
    QGrid g;
    auto to_index = [&](const std::string& s) -> Index {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size()) throw ValidationError("invalid q grid '" + text + "'");
      return static_cast<Index>(v);
    };
    if (text.find(':') != std::string::npos) {
      std::vector<std::string> parts;
      std::stringstream ss(text);
      for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
      if (parts.size() < 2 || parts.size() > 3) throw ValidationError("invalid q grid '" + text + "'");
      const Index lo = to_index(parts[0]), hi = to_index(parts[1]);
      const Index step = parts.size() == 3 ? to_index(parts[2]) : 1;
      if (step < 1) throw ValidationError("q grid step must be >= 1");
      for (Index q = lo; q <= hi; q += step) g.candidates.push_back(q);
    } else {
      std::stringstream ss(text);
      for (std::string part; std::getline(ss, part, ',');) g.candidates.push_back(to_index(part));
    }
    g.validate();
    return g;
  }
};

enum class FoldPreprocess { None, DoubleNormalize };

/// Everything an estimator needs besides the data: the classifier, the GMF
/// settings (config.train.seed is the master seed; q is set per call), how
/// each fold is normalized, and how many folds may run at once.
struct EvalConfig {
  ClassifierSpec classifier;
  TrainConfig train;
  FoldPreprocess preprocess = FoldPreprocess::None;
  unsigned jobs = 1;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// ---------------------------------------------------------------------------
// Seeds

/// Seed for the factorization of the fold keyed by `fold_key` at `q`.
inline std::uint64_t fold_seed(std::uint64_t master, std::uint64_t fold_key, Index q) {
  return mix_seed(master ^ mix_seed(fold_key * 2 + 1) ^ mix_seed(static_cast<std::uint64_t>(q) << 32));
}

/// Key used by e1 for the single full-data factorization.
inline constexpr std::uint64_t kFullDataKey = std::numeric_limits<std::uint64_t>::max();

/// Seed for the inner factorization with both j and j' removed. Symmetric in
/// (j, j'), since X_(j,j') and X_(j',j) are the same matrix.
inline std::uint64_t pair_seed(std::uint64_t master, Index j, Index jp, Index q) {
  const auto lo = static_cast<std::uint64_t>(std::min(j, jp));
  const auto hi = static_cast<std::uint64_t>(std::max(j, jp));
  return mix_seed(fold_seed(master, lo, q) ^ mix_seed(~hi));
}

namespace detail {

inline void check_labels(const Matrix& x, const LabelVector& y) {
  if (static_cast<std::size_t>(x.cols()) != y.size()) {
    throw ValidationError("matrix has " + std::to_string(x.cols()) + " samples but there are " +
                          std::to_string(y.size()) + " labels");
  }
}

/// Runs fn(0..count-1) on up to `jobs` threads. The first exception by task
/// index is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Classifier trained on whichever classes appear in a fold. With a single
/// class present it predicts that class.
class FoldClassifier {
 public:
  FoldClassifier(const ClassifierSpec& spec, const Matrix& features, const std::vector<int>& labels) {
    std::vector<int> present(labels);
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    to_original_ = present;
    if (present.size() == 1) return;
    std::vector<int> compact(labels.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
      compact[k] = static_cast<int>(std::lower_bound(present.begin(), present.end(), labels[k]) -
                                    present.begin());
    }
    model_.emplace(fit(spec, features, LabelVector(std::move(compact), static_cast<int>(present.size()))));
  }

  int predict(const Vector& x) const {
    if (!model_) return to_original_.front();
    return to_original_[static_cast<std::size_t>(model_->predict(x))];
  }

  const std::vector<int>& classes() const noexcept { return to_original_; }

 private:
  std::optional<Classifier> model_;
  std::vector<int> to_original_;
};

inline std::vector<int> gather(const LabelVector& y, const std::vector<Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index j : idx) out.push_back(y[static_cast<std::size_t>(j)]);
  return out;
}

inline std::vector<Index> complement(Index n, const std::vector<Index>& removed_sorted) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n) - removed_sorted.size());
  std::size_t r = 0;
  for (Index j = 0; j < n; ++j) {
    if (r < removed_sorted.size() && removed_sorted[r] == j) {
      ++r;
      continue;
    }
    out.push_back(j);
  }
  return out;
}

/// Training and test matrices of one fold with fold-local normalization:
/// each column is standardized by its own moments, rows by the training
/// fold's row moments.
inline std::pair<Matrix, Matrix> prepare_fold(const Matrix& x, const std::vector<Index>& training,
                                              const std::vector<Index>& held_out, FoldPreprocess mode) {
  Matrix train = select_columns(x, training);
  Matrix test = select_columns(x, held_out);
  if (mode == FoldPreprocess::DoubleNormalize) {
    train = standardize_columns(train);
    const auto rows = row_moments(train);
    train = apply_row_moments(train, rows);
    test = apply_row_moments(standardize_columns(test), rows);
  }
  return {std::move(train), std::move(test)};
}

struct FoldOutcome {
  std::vector<int> predicted;  // one per held-out column
  std::vector<std::string> warnings;
};

/// Factorize the training columns, train the classifier on their
/// metavariables, encode the held-out columns against the fitted loadings
/// and classify them.
inline FoldOutcome run_fold(const Matrix& x, const LabelVector& y, const std::vector<Index>& training,
                            const std::vector<Index>& held_out, Index q, std::uint64_t seed,
                            const EvalConfig& cfg) {
  auto [train_x, test_x] = prepare_fold(x, training, held_out, cfg.preprocess);
  TrainConfig tc = cfg.train;
  tc.q = q;
  tc.seed = seed;
  const FactorModel model = train(DataMatrix(std::move(train_x)), tc);
  FoldOutcome out;
  const auto labels = gather(y, training);
  FoldClassifier clf(cfg.classifier, model.B, labels);
  if (static_cast<int>(clf.classes().size()) < y.g()) {
    out.warnings.push_back("training fold lacks " + std::to_string(y.g() - static_cast<int>(clf.classes().size())) +
                           " class(es); those cannot be predicted");
  }
  bool deficient = false;
  const Matrix codes = encode_columns(test_x, model.A, tc.loss, tc.lambda0, tc.xi, &deficient);
  if (deficient) out.warnings.push_back("fitted loadings are rank deficient; minimum-norm encoding used");
  for (Index c = 0; c < codes.cols(); ++c) out.predicted.push_back(clf.predict(codes.col(c)));
  return out;
}

inline ErrorEstimate finalize(const LabelVector& y, const std::vector<int>& predicted,
                              std::vector<FoldRecord> folds, std::vector<std::string> warnings) {
  ErrorEstimate est;
  est.n_evaluated = predicted.size();
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    const SampleResult r{static_cast<Index>(j), y[j], predicted[j]};
    if (r.truth != r.predicted) ++est.misclassified;
    est.per_sample.push_back(r);
  }
  est.rate = est.n_evaluated == 0 ? 0.0
                                  : static_cast<double>(est.misclassified) / static_cast<double>(est.n_evaluated);
  est.folds = std::move(folds);
  est.warnings = std::move(warnings);
  return est;
}

inline std::string fold_context(const std::string& what, Index fold) {
  return what + " in fold " + std::to_string(fold);
}

/// Leave-one-out folds of a GMF pipeline at a fixed q; these are the e2 folds.
inline ErrorEstimate loo_gmf(const Matrix& x, const LabelVector& y, Index q, const EvalConfig& cfg) {
  const Index n = x.cols();
  std::vector<int> predicted(static_cast<std::size_t>(n), -1);
  std::vector<FoldRecord> folds(static_cast<std::size_t>(n));
  std::vector<std::vector<std::string>> notes(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), cfg.jobs, [&](std::size_t k) {
    const auto j = static_cast<Index>(k);
    FoldRecord& rec = folds[k];
    rec.held_out = {j};
    rec.training = complement(n, rec.held_out);
    rec.q = q;
    rec.seed = fold_seed(cfg.train.seed, static_cast<std::uint64_t>(j), q);
    try {
      auto out = run_fold(x, y, rec.training, rec.held_out, q, rec.seed, cfg);
      predicted[k] = out.predicted.front();
      for (auto& w : out.warnings) notes[k].push_back(fold_context(w, j));
    } catch (const DivergenceError& e) {
      throw DivergenceError(fold_context(e.what(), j), e.iteration());
    }
  });
  std::vector<std::string> warnings;
  for (auto& v : notes) warnings.insert(warnings.end(), v.begin(), v.end());
  return finalize(y, predicted, std::move(folds), std::move(warnings));
}

}  // namespace detail

/// Leave-one-out error of the classifier applied directly to the columns of X.
inline ErrorEstimate loo_error(const Matrix& x, const LabelVector& y, const ClassifierSpec& spec,
                               unsigned jobs = 1) {
  detail::check_labels(x, y);
  const Index n = x.cols();
  if (n < 2) throw ValidationError("leave-one-out needs at least 2 samples");
  std::vector<int> predicted(static_cast<std::size_t>(n), -1);
  std::vector<FoldRecord> folds(static_cast<std::size_t>(n));
  std::vector<std::vector<std::string>> notes(static_cast<std::size_t>(n));
  detail::parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t k) {
    const auto j = static_cast<Index>(k);
    FoldRecord& rec = folds[k];
    rec.held_out = {j};
    rec.training = detail::complement(n, rec.held_out);
    detail::FoldClassifier clf(spec, select_columns(x, rec.training), detail::gather(y, rec.training));
    if (static_cast<int>(clf.classes().size()) < y.g()) {
      notes[k].push_back(detail::fold_context("training fold lacks a class", j));
    }
    predicted[k] = clf.predict(x.col(j));
  });
  std::vector<std::string> warnings;
  for (auto& v : notes) warnings.insert(warnings.end(), v.begin(), v.end());
  return detail::finalize(y, predicted, std::move(folds), std::move(warnings));
}

/// Optimistic estimate: one factorization of the full matrix, then
/// leave-one-out over the columns of B.
inline ErrorEstimate e1(const Matrix& x, const LabelVector& y, Index q, const EvalConfig& cfg) {
  detail::check_labels(x, y);
  if (x.cols() < 2) throw ValidationError("e1 needs at least 2 samples");
  DataMatrix data(x);
  if (cfg.preprocess == FoldPreprocess::DoubleNormalize) data = double_normalize(data);
  TrainConfig tc = cfg.train;
  tc.q = q;
  tc.seed = fold_seed(cfg.train.seed, kFullDataKey, q);
  const FactorModel model = train(data, tc);
  ErrorEstimate est = loo_error(model.B, y, cfg.classifier, cfg.jobs);
  for (auto& rec : est.folds) {
    rec.q = q;
    rec.seed = tc.seed;
    rec.factorization_saw_held_out = true;
  }
  est.warnings.insert(est.warnings.end(), model.warnings.begin(), model.warnings.end());
  return est;
}

/// Leave-one-out with the factorization refit on every fold; held-out
/// columns are encoded against the fold's loadings.
inline ErrorEstimate e2(const Matrix& x, const LabelVector& y, Index q, const EvalConfig& cfg) {
  detail::check_labels(x, y);
  if (x.cols() < 2) throw ValidationError("e2 needs at least 2 samples");
  if (q < 1) throw ValidationError("q must be >= 1");
  return detail::loo_gmf(x, y, q, cfg);
}

struct SelectionResult {
  Index q_opt = 0;
  std::vector<std::pair<Index, ErrorEstimate>> curve;  // e2 per grid value
};

/// e2 over the grid; q_opt is the argmin, ties going to the smallest q.
inline SelectionResult select_q(const Matrix& x, const LabelVector& y, const QGrid& grid,
                                const EvalConfig& cfg) {
  grid.validate();
  SelectionResult res;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (Index q : grid.candidates) {
    ErrorEstimate est = e2(x, y, q, cfg);
    if (est.misclassified < best) {
      best = est.misclassified;
      res.q_opt = q;
    }
    res.curve.emplace_back(q, std::move(est));
  }
  return res;
}

struct E3Result {
  ErrorEstimate estimate;
  std::vector<Index> q_per_fold;  // q_oj chosen by the inner selection for each j
  std::vector<std::vector<std::size_t>> inner_errors;  // [j][grid index] misclassified of n-1
  SelectionResult outer;  // the plain e2 curve over the grid
};

/// Selection-bias-corrected estimate. For each held-out j, q_oj is chosen
/// by leave-one-out over the remaining n-1 samples (each inner fold drops
/// both j and j'); sample j is then scored by the q_oj model trained
/// without j.
inline E3Result e3(const Matrix& x, const LabelVector& y, const QGrid& grid, const EvalConfig& cfg,
                   const ProgressFn& progress) {
  detail::check_labels(x, y);
  grid.validate();
  const Index n = x.cols();
  if (n < 3) throw ValidationError("e3 needs at least 3 samples");
  const std::size_t nq = grid.candidates.size();

  E3Result res;
  res.outer = select_q(x, y, grid, cfg);

  // Each unordered pair {j, j'} defines one training set; its model scores
  // j' for the inner selection of j and j for the inner selection of j'.
  struct PairTask {
    Index lo, hi;
    std::size_t qi;
  };
  std::vector<PairTask> tasks;
  tasks.reserve(static_cast<std::size_t>(n * (n - 1) / 2) * nq);
  for (Index lo = 0; lo < n; ++lo)
    for (Index hi = lo + 1; hi < n; ++hi)
      for (std::size_t qi = 0; qi < nq; ++qi) tasks.push_back({lo, hi, qi});

  // wrong[j][qi][j'] = 1 when the inner model without {j, j'} misclassifies j'
  std::vector<std::vector<std::vector<char>>> wrong(
      static_cast<std::size_t>(n),
      std::vector<std::vector<char>>(nq, std::vector<char>(static_cast<std::size_t>(n), 0)));
  std::mutex progress_mutex;
  std::size_t done = 0;
  const std::size_t total = tasks.size();
  detail::parallel_for(tasks.size(), cfg.jobs, [&](std::size_t t) {
    const PairTask& task = tasks[t];
    const Index q = grid.candidates[task.qi];
    const std::vector<Index> held = {task.lo, task.hi};
    const auto training = detail::complement(n, held);
    try {
      const auto out = detail::run_fold(x, y, training, held, q, pair_seed(cfg.train.seed, task.lo, task.hi, q), cfg);
      // out.predicted[0] is for lo (scored in hi's selection), [1] for hi
      wrong[static_cast<std::size_t>(task.hi)][task.qi][static_cast<std::size_t>(task.lo)] =
          out.predicted[0] != y[static_cast<std::size_t>(task.lo)];
      wrong[static_cast<std::size_t>(task.lo)][task.qi][static_cast<std::size_t>(task.hi)] =
          out.predicted[1] != y[static_cast<std::size_t>(task.hi)];
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " in inner fold (" + std::to_string(task.lo) + ", " +
                                std::to_string(task.hi) + ")",
                            e.iteration());
    }
    std::lock_guard<std::mutex> lock(progress_mutex);
    ++done;
    progress(done, total);
  });

  std::vector<int> predicted(static_cast<std::size_t>(n));
  std::vector<FoldRecord> folds;
  res.inner_errors.assign(static_cast<std::size_t>(n), std::vector<std::size_t>(nq, 0));
  for (Index j = 0; j < n; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    std::size_t best_qi = 0;
    for (std::size_t qi = 0; qi < nq; ++qi) {
      std::size_t errs = 0;
      for (char w : wrong[sj][qi]) errs += static_cast<std::size_t>(w);
      res.inner_errors[sj][qi] = errs;
      if (errs < res.inner_errors[sj][best_qi]) best_qi = qi;
    }
    const Index q_oj = grid.candidates[best_qi];
    res.q_per_fold.push_back(q_oj);
    const ErrorEstimate& outer = res.outer.curve[best_qi].second;
    predicted[sj] = outer.per_sample[sj].predicted;
    folds.push_back(outer.folds[sj]);
  }
  std::vector<std::string> warnings;
  for (const auto& [q, est] : res.outer.curve) warnings.insert(warnings.end(), est.warnings.begin(), est.warnings.end());
  res.estimate = detail::finalize(y, predicted, std::move(folds), std::move(warnings));
  return res;
}

/// Stratified fold assignment: each class is shuffled (seeded), classes are
/// concatenated in index order and dealt round-robin into k folds. Returns
/// held-out index lists, each sorted.
inline std::vector<std::vector<Index>> stratified_folds(const LabelVector& y, std::size_t k, std::uint64_t seed,
                                                        std::vector<std::string>* warnings = nullptr) {
  const std::size_t n = y.size();
  if (k < 2 || k > n) throw ValidationError("k must lie in [2, n]");
  std::mt19937_64 rng(seed);
  std::vector<Index> sequence;
  sequence.reserve(n);
  for (int c = 0; c < y.g(); ++c) {
    std::vector<Index> members;
    for (std::size_t j = 0; j < n; ++j)
      if (y[j] == c) members.push_back(static_cast<Index>(j));
    if (members.size() < k && warnings) {
      warnings->push_back("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " samples, fewer than k = " + std::to_string(k) + "; stratification is best-effort");
    }
    detail::shuffle(members, rng);
    sequence.insert(sequence.end(), members.begin(), members.end());
  }
  std::vector<std::vector<Index>> folds(k);
  for (std::size_t t = 0; t < sequence.size(); ++t) folds[t % k].push_back(sequence[t]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// k-fold version of e2. A fold's factorization seed is keyed by its
/// smallest held-out index, so k = n reproduces e2 exactly.
inline ErrorEstimate kfold_error(const Matrix& x, const LabelVector& y, Index q, std::size_t k,
                                 const EvalConfig& cfg, std::uint64_t seed) {
  detail::check_labels(x, y);
  std::vector<std::string> warnings;
  const auto partition = stratified_folds(y, k, seed, &warnings);
  const Index n = x.cols();
  std::vector<int> predicted(static_cast<std::size_t>(n), -1);
  std::vector<FoldRecord> folds(k);
  std::vector<std::vector<std::string>> notes(k);
  detail::parallel_for(k, cfg.jobs, [&](std::size_t f) {
    FoldRecord& rec = folds[f];
    rec.held_out = partition[f];
    rec.training = detail::complement(n, rec.held_out);
    rec.q = q;
    rec.seed = fold_seed(cfg.train.seed, static_cast<std::uint64_t>(rec.held_out.front()), q);
    try {
      auto out = detail::run_fold(x, y, rec.training, rec.held_out, q, rec.seed, cfg);
      for (std::size_t c = 0; c < rec.held_out.size(); ++c) {
        predicted[static_cast<std::size_t>(rec.held_out[c])] = out.predicted[c];
      }
      for (auto& w : out.warnings) notes[f].push_back("fold " + std::to_string(f) + ": " + w);
    } catch (const DivergenceError& e) {
      throw DivergenceError(detail::fold_context(e.what(), static_cast<Index>(f)), e.iteration());
    }
  });
  for (auto& v : notes) warnings.insert(warnings.end(), v.begin(), v.end());
  return detail::finalize(y, predicted, std::move(folds), std::move(warnings));
}

}  // namespace gmf
