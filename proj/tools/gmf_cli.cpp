// gmf command-line tool: preprocess, factorize, encode, evaluate, select-q,
// bench and replay. Every run writes a JSON manifest holding the resolved
// parameters and SHA-256 digests of its inputs and outputs; `replay` reruns
// a manifest and checks the outputs come out byte-identical.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gmf/gmf.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kParse = 2,
  kValidation = 3,
  kDivergence = 4,
  kIo = 5,
};

// ---------------------------------------------------------------------------
// Parameters. Each command's struct is what the manifest records and what
// replay feeds back in.

struct TrainParams {
  gmf::Index q = 10;
  std::size_t iters = 100;
  double lambda0 = 0.01;
  double xi = 0.75;
  std::string loss = "squared";
  std::uint64_t seed = 0;
  double init_scale = 0.1;

  gmf::TrainConfig config() const {
    gmf::TrainConfig c;
    c.q = q;
    c.m = iters;
    c.lambda0 = lambda0;
    c.xi = xi;
    c.loss = gmf::LossSpec::parse(loss);
    c.seed = seed;
    c.init_scale = init_scale;
    return c;
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainParams, q, iters, lambda0, xi, loss, seed, init_scale)

struct ClassifierParams {
  std::string model = "svm";
  double c = 1.0;
  std::size_t epochs = 200;
  std::uint64_t svm_seed = 0;
  double ridge = 1e-4;
  std::size_t lr_iters = 500;
  double delta = 0.0;

  gmf::ClassifierSpec spec() const {
    gmf::ClassifierSpec s;
    s.kind = gmf::parse_classifier_kind(model);
    s.c_reg = c;
    s.epochs = epochs;
    s.seed = svm_seed;
    s.ridge = ridge;
    s.iterations = lr_iters;
    s.delta = delta;
    return s;
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClassifierParams, model, c, epochs, svm_seed, ridge, lr_iters,
                                                delta)

struct PreprocessParams {
  std::string input;
  std::string output;
  bool transpose = false;
  bool filter = true;
  double floor = 1.0;
  double ceil = 20000.0;
  double ratio_min = 2.0;
  double span_min = 100.0;
  bool log = true;
  std::string normalize = "double";  // double | center | none
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PreprocessParams, input, output, transpose, filter, floor, ceil,
                                                ratio_min, span_min, log, normalize)

struct FactorizeParams {
  std::string input;
  std::string model;
  std::string trace;
  bool transpose = false;
  TrainParams train;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FactorizeParams, input, model, trace, transpose, train)

struct EncodeParams {
  std::string input;
  std::string model;
  std::string output;
  bool transpose = false;
  double lambda0 = 0.01;
  double xi = 0.75;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncodeParams, input, model, output, transpose, lambda0, xi)

struct EvaluateParams {
  std::string input;
  std::string labels;
  std::string out;
  bool transpose = false;
  std::string estimator = "e2";  // comma-separated: loo, e1, e2, e3, kfold
  gmf::Index q = 10;
  std::string grid = "2:30:2";
  std::size_t k = 10;
  std::uint64_t fold_seed = 0;
  bool fold_normalize = false;
  TrainParams train;
  ClassifierParams classifier;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvaluateParams, input, labels, out, transpose, estimator, q, grid, k,
                                                fold_seed, fold_normalize, train, classifier)

struct BenchParams {
  std::string input;
  std::string synthetic;  // "p,n"
  std::string out;
  bool transpose = false;
  std::size_t nmf_iters = 300;
  std::uint64_t data_seed = 0;
  TrainParams train{11, 300};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BenchParams, input, synthetic, out, transpose, nmf_iters, data_seed,
                                                train)

// ---------------------------------------------------------------------------
// Manifest bookkeeping

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw gmf::Error("SHA-256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << int(md[k]);
  return os.str();
}

std::string absolute(const std::string& path) { return fs::absolute(path).lexically_normal().string(); }

struct RunRecord {
  json inputs = json::array();
  json outputs = json::array();
  json timings = json::object();
  std::vector<std::string> notes;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void input(const std::string& role, const std::string& path) {
    inputs.push_back({{"role", role}, {"path", absolute(path)}, {"sha256", sha256_hex(gmf::io::read_file(path))}});
  }

  void write(const std::string& role, const std::string& path, const std::string& contents,
             bool reproducible = true) {
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    gmf::io::write_file(path, contents);
    outputs.push_back({{"role", role},
                       {"path", absolute(path)},
                       {"sha256", sha256_hex(contents)},
                       {"reproducible", reproducible}});
  }

  void time(const std::string& what, double ms) { timings[what] = ms; }

  void note(const std::string& text) {
    std::cerr << "gmf: note: " << text << '\n';
    notes.push_back(text);
  }
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

unsigned resolve_jobs(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("GMF_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw gmf::ValidationError(std::string("GMF_JOBS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void write_manifest(const std::string& path, const std::string& command, const json& params, std::uint64_t seed,
                    unsigned jobs, RunRecord& rec) {
  rec.time("total", ms_since(rec.start));
  json m;
  m["tool"] = "gmf";
  m["version"] = gmf::kVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["jobs"] = jobs;
  m["parameters"] = params;
  m["inputs"] = rec.inputs;
  m["outputs"] = rec.outputs;
  m["timings_ms"] = rec.timings;
  m["notes"] = rec.notes;
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  gmf::io::write_file(path, m.dump(2) + "\n");
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// ---------------------------------------------------------------------------
// Commands

void run_preprocess(const PreprocessParams& p, RunRecord& rec) {
  rec.input("matrix", p.input);
  gmf::DataMatrix x = gmf::io::read_matrix(p.input, p.transpose);
  const auto t0 = std::chrono::steady_clock::now();
  if (p.filter) {
    gmf::FilterOptions opt;
    opt.floor = p.floor;
    opt.ceil = p.ceil;
    opt.ratio_min = p.ratio_min;
    opt.span_min = p.span_min;
    opt.log = p.log;
    auto [filtered, report] = gmf::threshold_filter_log(x, opt);
    rec.note("filter kept " + std::to_string(report.kept_rows.size()) + " of " + std::to_string(x.rows()) +
             " rows");
    x = std::move(filtered);
  } else if (p.log) {
    if ((x.values.array() <= 0.0).any()) throw gmf::ValidationError("log transform needs positive entries");
    x.values = x.values.array().log().matrix();
  }
  if (p.normalize == "double") {
    gmf::NormalizeReport nr;
    x = gmf::double_normalize(x, &nr);
    if (!nr.constant_columns.empty()) {
      rec.note(std::to_string(nr.constant_columns.size()) + " constant column(s) became zeros");
    }
    if (!nr.constant_rows.empty()) rec.note(std::to_string(nr.constant_rows.size()) + " constant row(s) after column pass");
  } else if (p.normalize == "center") {
    x = gmf::mean_center(x);
  } else if (p.normalize != "none") {
    throw gmf::ValidationError("--normalize must be double, center or none");
  }
  rec.time("preprocess", ms_since(t0));
  rec.write("matrix", p.output, gmf::io::format_matrix(x));
  std::cout << "wrote " << x.rows() << " x " << x.cols() << " matrix to " << p.output << '\n';
}

void run_factorize(const FactorizeParams& p, RunRecord& rec) {
  rec.input("matrix", p.input);
  const gmf::DataMatrix x = gmf::io::read_matrix(p.input, p.transpose);
  const auto t0 = std::chrono::steady_clock::now();
  const gmf::FactorModel model = gmf::train(x, p.train.config());
  rec.time("train", ms_since(t0));
  for (const auto& w : model.warnings) rec.note(w);
  if (model.saturated_residuals > 0) {
    rec.note(std::to_string(model.saturated_residuals) + " residual(s) hit the loss clamp");
  }
  rec.write("model", p.model, gmf::io::format_model(model));
  rec.write("trace", p.trace, gmf::io::format_trace(model.trace));
  std::cout << "objective " << gmf::format_double(model.final_objective) << " after " << model.trace.size()
            << " iterations\n";
}

void run_encode(const EncodeParams& p, RunRecord& rec) {
  rec.input("matrix", p.input);
  rec.input("model", p.model);
  const gmf::DataMatrix x = gmf::io::read_matrix(p.input, p.transpose);
  const gmf::FactorModel model = gmf::io::load_model(p.model);
  bool deficient = false;
  const auto t0 = std::chrono::steady_clock::now();
  gmf::DataMatrix codes(gmf::encode_columns(x.values, model.A, model.config.loss, p.lambda0, p.xi, &deficient));
  rec.time("encode", ms_since(t0));
  if (deficient) rec.note("loadings are rank deficient; minimum-norm coordinates written");
  codes.col_ids = x.col_ids;
  if (codes.has_col_ids()) {
    for (gmf::Index f = 0; f < codes.rows(); ++f) codes.row_ids.push_back("mv" + std::to_string(f + 1));
  }
  rec.write("codes", p.output, gmf::io::format_matrix(codes));
  std::cout << "encoded " << codes.cols() << " sample(s) into " << codes.rows() << " metavariables\n";
}

struct LabeledData {
  gmf::DataMatrix x;
  gmf::LabelVector y;
};

LabeledData load_labeled(const std::string& matrix, const std::string& labels, bool transpose, RunRecord& rec) {
  rec.input("matrix", matrix);
  rec.input("labels", labels);
  LabeledData d{gmf::io::read_matrix(matrix, transpose), {}};
  d.y = gmf::io::align_labels(gmf::io::read_labels(labels), d.x);
  return d;
}

gmf::EvalConfig eval_config(const EvaluateParams& p, unsigned jobs) {
  gmf::EvalConfig cfg;
  cfg.classifier = p.classifier.spec();
  cfg.train = p.train.config();
  cfg.preprocess = p.fold_normalize ? gmf::FoldPreprocess::DoubleNormalize : gmf::FoldPreprocess::None;
  cfg.jobs = jobs;
  return cfg;
}

std::string sample_rows(const std::string& estimator, const gmf::ErrorEstimate& est, const gmf::DataMatrix& x,
                        const std::vector<gmf::Index>& q_per_sample) {
  std::string out;
  for (const auto& s : est.per_sample) {
    const auto j = static_cast<std::size_t>(s.sample);
    out += estimator + ',' + std::to_string(s.sample) + ',' + (x.has_col_ids() ? x.col_ids[j] : "") + ',' +
           std::to_string(s.truth) + ',' + std::to_string(s.predicted) + ',' +
           std::to_string(q_per_sample[j]) + '\n';
  }
  return out;
}

std::string curve_csv(const gmf::SelectionResult& sel) {
  std::string out = "q,rate,misclassified,n\n";
  for (const auto& [q, est] : sel.curve) {
    out += std::to_string(q) + ',' + gmf::format_double(est.rate) + ',' + std::to_string(est.misclassified) + ',' +
           std::to_string(est.n_evaluated) + '\n';
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void run_evaluate(const EvaluateParams& p, unsigned jobs, bool quiet, RunRecord& rec) {
  const auto [x, y] = load_labeled(p.input, p.labels, p.transpose, rec);
  const gmf::EvalConfig cfg = eval_config(p, jobs);
  const auto estimators = split_list(p.estimator);
  if (estimators.empty()) throw gmf::ValidationError("--estimator is empty");

  std::string report = "estimator,model,q,rate,misclassified,n\n";
  std::string samples = "estimator,sample,id,truth,predicted,q\n";
  std::ostringstream summary;
  summary << "model=" << p.classifier.model;
  for (const auto& name : estimators) {
    const auto t0 = std::chrono::steady_clock::now();
    gmf::ErrorEstimate est;
    std::vector<gmf::Index> q_used(static_cast<std::size_t>(x.cols()), p.q);
    std::string q_text = std::to_string(p.q);
    if (name == "loo") {
      est = gmf::loo_error(x.values, y, cfg.classifier, jobs);
      std::fill(q_used.begin(), q_used.end(), 0);
      q_text = "";
    } else if (name == "e1") {
      est = gmf::e1(x.values, y, p.q, cfg);
    } else if (name == "e2") {
      est = gmf::e2(x.values, y, p.q, cfg);
    } else if (name == "kfold") {
      est = gmf::kfold_error(x.values, y, p.q, p.k, cfg, p.fold_seed);
    } else if (name == "e3") {
      const gmf::QGrid grid = gmf::QGrid::parse(p.grid);
      gmf::ProgressFn progress = [quiet](std::size_t done, std::size_t total) {
        if (!quiet && (done == total || done % 50 == 0)) std::cerr << "\re3 inner fits " << done << '/' << total << std::flush;
        if (!quiet && done == total) std::cerr << '\n';
      };
      gmf::E3Result res = gmf::e3(x.values, y, grid, cfg, progress);
      est = std::move(res.estimate);
      q_used = res.q_per_fold;
      q_text = "";
      rec.write("curve", join_path(p.out, "curve.csv"), curve_csv(res.outer));
      std::string inner = "sample,q_selected";
      for (gmf::Index q : grid.candidates) inner += ",errors_q" + std::to_string(q);
      inner += '\n';
      for (std::size_t j = 0; j < res.inner_errors.size(); ++j) {
        inner += std::to_string(j) + ',' + std::to_string(res.q_per_fold[j]);
        for (std::size_t e : res.inner_errors[j]) inner += ',' + std::to_string(e);
        inner += '\n';
      }
      rec.write("inner_selection", join_path(p.out, "inner.csv"), inner);
    } else {
      throw gmf::ValidationError("unknown estimator '" + name + "' (expected loo, e1, e2, e3 or kfold)");
    }
    rec.time(name, ms_since(t0));
    for (const auto& w : est.warnings) rec.note(name + ": " + w);
    report += name + ',' + p.classifier.model + ',' + q_text + ',' + gmf::format_double(est.rate) + ',' +
              std::to_string(est.misclassified) + ',' + std::to_string(est.n_evaluated) + '\n';
    samples += sample_rows(name, est, x, q_used);
    summary << ' ' << name << '=' << std::fixed << std::setprecision(4) << est.rate << std::defaultfloat << " ("
              << est.misclassified << '/' << est.n_evaluated << ')';
  }
  std::cout << summary.str() << " q=" << p.q << '\n';
  rec.write("report", join_path(p.out, "report.csv"), report);
  rec.write("samples", join_path(p.out, "samples.csv"), samples);
}

void run_select_q(const EvaluateParams& p, unsigned jobs, RunRecord& rec) {
  const auto [x, y] = load_labeled(p.input, p.labels, p.transpose, rec);
  const gmf::QGrid grid = gmf::QGrid::parse(p.grid);
  const auto t0 = std::chrono::steady_clock::now();
  const gmf::SelectionResult sel = gmf::select_q(x.values, y, grid, eval_config(p, jobs));
  rec.time("select_q", ms_since(t0));
  rec.write("curve", join_path(p.out, "curve.csv"), curve_csv(sel));
  std::size_t best = 0;
  for (const auto& [q, est] : sel.curve)
    if (q == sel.q_opt) best = est.misclassified;
  rec.write("selection", join_path(p.out, "selection.csv"),
            "q_opt,misclassified,n\n" + std::to_string(sel.q_opt) + ',' + std::to_string(best) + ',' +
                std::to_string(x.cols()) + '\n');
  std::cout << "q_opt=" << sel.q_opt << " e2 misclassified " << best << '/' << x.cols() << '\n';
}

// Standard normal matrix from mt19937_64 bits via Box-Muller, so the same
// seed gives the same data with any standard library.
gmf::Matrix synthetic_normal(gmf::Index p, gmf::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  gmf::Matrix x(p, n);
  for (gmf::Index k = 0; k < x.size(); k += 2) {
    const double u1 = 1.0 - gmf::unit_interval(rng());
    const double u2 = gmf::unit_interval(rng());
    const double r = std::sqrt(-2.0 * std::log(u1));
    x.data()[k] = r * std::cos(2.0 * M_PI * u2);
    if (k + 1 < x.size()) x.data()[k + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  return x;
}

void run_bench(const BenchParams& p, RunRecord& rec) {
  gmf::DataMatrix x;
  if (!p.input.empty() && !p.synthetic.empty()) throw gmf::ValidationError("give either a matrix or --synthetic");
  if (!p.input.empty()) {
    rec.input("matrix", p.input);
    x = gmf::io::read_matrix(p.input, p.transpose);
  } else if (!p.synthetic.empty()) {
    const auto dims = split_list(p.synthetic);
    gmf::Index pn[2] = {0, 0};
    bool ok = dims.size() == 2;
    for (std::size_t k = 0; ok && k < 2; ++k) {
      try {
        std::size_t used = 0;
        pn[k] = std::stol(dims[k], &used);
        ok = used == dims[k].size() && pn[k] > 0;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) throw gmf::ValidationError("--synthetic expects p,n with positive integers");
    x = gmf::DataMatrix(synthetic_normal(pn[0], pn[1], p.data_seed));
  } else {
    throw gmf::ValidationError("bench needs a matrix file or --synthetic p,n");
  }

  std::string csv = "method,q,iterations,seconds,residual\n";
  auto row = [&](const std::string& method, std::size_t iters, double seconds, double residual) {
    csv += method + ',' + std::to_string(p.train.q) + ',' + std::to_string(iters) + ',' + gmf::format_double(seconds) +
           ',' + gmf::format_double(residual) + '\n';
    std::cout << std::left << std::setw(5) << method << " q=" << p.train.q << " iters=" << iters << " seconds=" << seconds
              << " residual=" << residual << '\n';
  };

  const gmf::TrainConfig tc = p.train.config();
  auto t0 = std::chrono::steady_clock::now();
  const gmf::FactorModel model = gmf::train(x, tc);
  const double gmf_s = ms_since(t0) / 1000.0;
  for (const auto& w : model.warnings) rec.note(w);
  row("gmf", tc.m, gmf_s, (x.values - model.A * model.B).squaredNorm());

  if ((x.values.array() < 0.0).any()) {
    rec.note("NMF skipped: matrix has negative entries and NMF requires nonnegative data");
  } else {
    t0 = std::chrono::steady_clock::now();
    const gmf::NmfFactors nmf = gmf::nmf(x.values, tc.q, p.nmf_iters, p.train.seed);
    row("nmf", p.nmf_iters, ms_since(t0) / 1000.0, nmf.objective_trace.empty() ? (x.values).squaredNorm()
                                                                                 : nmf.objective_trace.back());
  }

  t0 = std::chrono::steady_clock::now();
  const gmf::SvdFactors svd = gmf::truncated_svd(x.values, tc.q);
  const double svd_s = ms_since(t0) / 1000.0;
  if (!svd.converged) rec.note("truncated SVD did not converge within its iteration limit");
  row("svd", svd.iterations, svd_s, (x.values - svd.approximation()).squaredNorm());

  rec.time("gmf", gmf_s * 1000.0);
  rec.write("bench", join_path(p.out, "bench.csv"), csv, false);
}

// ---------------------------------------------------------------------------
// Replay

int replay(const std::string& manifest_path, const std::string& out_dir, unsigned jobs_flag) {
  json m;
  try {
    m = json::parse(gmf::io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw gmf::ParseError(manifest_path + ": " + e.what());
  }
  for (const auto& in : m.at("inputs")) {
    const std::string path = in.at("path");
    const std::string now = sha256_hex(gmf::io::read_file(path));
    if (now != in.at("sha256").get<std::string>()) {
      throw gmf::ValidationError("input '" + path + "' changed since the manifest was written");
    }
  }
  const std::string command = m.at("command");
  const json& params = m.at("parameters");
  const unsigned jobs = resolve_jobs(jobs_flag);
  auto moved = [&](const std::string& path) {
    return out_dir.empty() || path.empty() ? path : join_path(out_dir, fs::path(path).filename().string());
  };
  auto moved_dir = [&](const std::string& dir) { return out_dir.empty() ? dir : out_dir; };

  RunRecord rec;
  if (command == "preprocess") {
    auto p = params.get<PreprocessParams>();
    p.output = moved(p.output);
    run_preprocess(p, rec);
  } else if (command == "factorize") {
    auto p = params.get<FactorizeParams>();
    p.model = moved(p.model);
    p.trace = moved(p.trace);
    run_factorize(p, rec);
  } else if (command == "encode") {
    auto p = params.get<EncodeParams>();
    p.output = moved(p.output);
    run_encode(p, rec);
  } else if (command == "evaluate") {
    auto p = params.get<EvaluateParams>();
    p.out = moved_dir(p.out);
    run_evaluate(p, jobs, true, rec);
  } else if (command == "select-q") {
    auto p = params.get<EvaluateParams>();
    p.out = moved_dir(p.out);
    run_select_q(p, jobs, rec);
  } else if (command == "bench") {
    auto p = params.get<BenchParams>();
    p.out = moved_dir(p.out);
    run_bench(p, rec);
  } else {
    throw gmf::ValidationError("manifest has unknown command '" + command + "'");
  }

  const json& before = m.at("outputs");
  if (before.size() != rec.outputs.size()) {
    std::cout << "MISMATCH output count " << before.size() << " vs " << rec.outputs.size() << '\n';
    return kOther;
  }
  bool identical = true;
  for (std::size_t k = 0; k < before.size(); ++k) {
    const auto& a = before[k];
    const auto& b = rec.outputs[k];
    const std::string role = a.at("role");
    if (!a.value("reproducible", true)) {
      std::cout << "skip     " << role << " (contains timings)\n";
      continue;
    }
    const bool same = a.at("sha256") == b.at("sha256");
    identical = identical && same;
    std::cout << (same ? "match    " : "MISMATCH ") << role << ' ' << b.at("path").get<std::string>() << '\n';
  }
  std::cout << (identical ? "replay identical" : "replay differs") << '\n';
  return identical ? kOk : kOther;
}

// ---------------------------------------------------------------------------
// Option wiring

void add_train_options(CLI::App* cmd, TrainParams& t, bool with_q_and_iters = true) {
  if (with_q_and_iters) {
    cmd->add_option("--q", t.q, "Number of metavariables")->capture_default_str();
    cmd->add_option("--iters,-m", t.iters, "Global iterations (full sweeps)")->capture_default_str();
  }
  cmd->add_option("--lambda0", t.lambda0, "Initial learning rate")->capture_default_str();
  cmd->add_option("--xi", t.xi, "Learning-rate correction factor in (0, 1)")->capture_default_str();
  cmd->add_option("--loss", t.loss, "squared, exp or exp:<alpha>")->capture_default_str();
  cmd->add_option("--seed", t.seed, "Initialization seed (master seed for evaluation)")->capture_default_str();
  cmd->add_option("--init-scale", t.init_scale, "Initial factors uniform on [-s, s]")->capture_default_str();
}

void add_classifier_options(CLI::App* cmd, ClassifierParams& c) {
  cmd->add_option("--model", c.model, "Classifier: svm, mlr or nsc")->capture_default_str();
  cmd->add_option("--svm-c", c.c, "SVM regularization")->capture_default_str();
  cmd->add_option("--svm-epochs", c.epochs, "SVM passes over the data")->capture_default_str();
  cmd->add_option("--svm-seed", c.svm_seed, "SVM sample-order seed")->capture_default_str();
  cmd->add_option("--ridge", c.ridge, "Logistic regression weight penalty")->capture_default_str();
  cmd->add_option("--lr-iters", c.lr_iters, "Logistic regression gradient steps")->capture_default_str();
  cmd->add_option("--delta", c.delta, "NSC shrinkage threshold")->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"General matrix factorization for microarray data"};
  app.set_version_flag("--version", std::string(gmf::kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  std::string manifest;
  unsigned jobs_flag = 0;
  bool quiet = false;
  app.add_option("--manifest", manifest, "Manifest path (default derived from the outputs)");
  app.add_option("--jobs,-j", jobs_flag, "Concurrent folds (default $GMF_JOBS or 1)");
  app.add_flag("--quiet,-q", quiet, "No progress output");

  PreprocessParams pre;
  auto* c_pre = app.add_subcommand("preprocess", "Threshold, filter, log and normalize a matrix");
  c_pre->add_option("input", pre.input, "Matrix file (rows genes, columns samples)")->required();
  c_pre->add_option("-o,--output", pre.output, "Output matrix file")->required();
  c_pre->add_flag("--transpose", pre.transpose, "Input has samples as rows");
  c_pre->add_flag("!--no-filter", pre.filter, "Skip clamping and row filtering");
  c_pre->add_option("--floor", pre.floor)->capture_default_str();
  c_pre->add_option("--ceil", pre.ceil)->capture_default_str();
  c_pre->add_option("--ratio-min", pre.ratio_min)->capture_default_str();
  c_pre->add_option("--span-min", pre.span_min)->capture_default_str();
  c_pre->add_flag("!--no-log", pre.log, "Skip the natural log");
  c_pre->add_option("--normalize", pre.normalize, "double, center or none")->capture_default_str();

  FactorizeParams fac;
  auto* c_fac = app.add_subcommand("factorize", "Fit X ~ AB and write the model and objective trace");
  c_fac->add_option("input", fac.input, "Matrix file")->required();
  c_fac->add_option("-o,--model", fac.model, "Model output file")->required();
  c_fac->add_option("--trace", fac.trace, "Trace CSV (default <model>.trace.csv)");
  c_fac->add_flag("--transpose", fac.transpose);
  add_train_options(c_fac, fac.train);

  EncodeParams enc;
  auto* c_enc = app.add_subcommand("encode", "Metavariable coordinates of new samples under a fitted model");
  c_enc->add_option("input", enc.input, "Matrix of new samples (same genes as the model)")->required();
  c_enc->add_option("--model", enc.model, "Model file")->required();
  c_enc->add_option("-o,--output", enc.output, "Output q x n matrix")->required();
  c_enc->add_flag("--transpose", enc.transpose);
  c_enc->add_option("--lambda0", enc.lambda0, "Step size for non-squared losses")->capture_default_str();
  c_enc->add_option("--xi", enc.xi)->capture_default_str();

  EvaluateParams ev;
  auto* c_ev = app.add_subcommand("evaluate", "Leave-one-out error estimates (loo, e1, e2, e3, kfold)");
  c_ev->add_option("input", ev.input, "Matrix file")->required();
  c_ev->add_option("--labels", ev.labels, "Labels file: sample id and class per line")->required();
  c_ev->add_option("--out", ev.out, "Output directory")->required();
  c_ev->add_flag("--transpose", ev.transpose);
  c_ev->add_option("--estimator", ev.estimator, "Comma-separated list of loo, e1, e2, e3, kfold")
      ->capture_default_str();
  c_ev->add_option("--q", ev.q, "Metavariables for e1, e2, kfold")->capture_default_str();
  c_ev->add_option("--grid", ev.grid, "q grid for e3: lo:hi[:step] or a,b,c")->capture_default_str();
  c_ev->add_option("--k", ev.k, "Folds for kfold")->capture_default_str();
  c_ev->add_option("--fold-seed", ev.fold_seed, "Seed of the k-fold partition")->capture_default_str();
  c_ev->add_flag("--fold-normalize", ev.fold_normalize, "Double-normalize inside each fold");
  add_train_options(c_ev, ev.train, false);
  c_ev->add_option("--iters,-m", ev.train.iters, "Global iterations per factorization")->capture_default_str();
  add_classifier_options(c_ev, ev.classifier);

  EvaluateParams sq;
  auto* c_sq = app.add_subcommand("select-q", "e2 over a q grid and its argmin");
  c_sq->add_option("input", sq.input, "Matrix file")->required();
  c_sq->add_option("--labels", sq.labels, "Labels file")->required();
  c_sq->add_option("--out", sq.out, "Output directory")->required();
  c_sq->add_flag("--transpose", sq.transpose);
  c_sq->add_option("--grid", sq.grid, "lo:hi[:step] or a,b,c")->capture_default_str();
  c_sq->add_flag("--fold-normalize", sq.fold_normalize);
  add_train_options(c_sq, sq.train, false);
  c_sq->add_option("--iters,-m", sq.train.iters)->capture_default_str();
  add_classifier_options(c_sq, sq.classifier);

  BenchParams be;
  auto* c_be = app.add_subcommand("bench", "Time GMF, NMF and truncated SVD on one matrix");
  c_be->add_option("input", be.input, "Matrix file");
  c_be->add_option("--synthetic", be.synthetic, "Standard normal p,n matrix instead of a file");
  c_be->add_option("--out", be.out, "Output directory")->required();
  c_be->add_flag("--transpose", be.transpose);
  c_be->add_option("--nmf-iters", be.nmf_iters)->capture_default_str();
  c_be->add_option("--data-seed", be.data_seed, "Seed of the synthetic matrix")->capture_default_str();
  add_train_options(c_be, be.train);

  std::string replay_manifest, replay_out;
  auto* c_re = app.add_subcommand("replay", "Rerun a manifest and compare output digests");
  c_re->add_option("manifest", replay_manifest)->required();
  c_re->add_option("--out-dir", replay_out, "Write outputs here instead of the recorded paths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kOther;
  }

  if (c_re->parsed()) return replay(replay_manifest, replay_out, jobs_flag);

  const unsigned jobs = resolve_jobs(jobs_flag);
  if (c_fac->parsed() && fac.trace.empty()) fac.trace = fac.model + ".trace.csv";
  for (std::string* path : {&pre.input, &pre.output, &fac.input, &fac.model, &fac.trace, &enc.input, &enc.model,
                            &enc.output, &ev.input, &ev.labels, &ev.out, &sq.input, &sq.labels, &sq.out, &be.input,
                            &be.out}) {
    if (!path->empty()) *path = absolute(*path);
  }
  RunRecord rec;
  if (c_pre->parsed()) {
    run_preprocess(pre, rec);
    write_manifest(manifest.empty() ? pre.output + ".manifest.json" : manifest, "preprocess", json(pre), 0, jobs, rec);
  } else if (c_fac->parsed()) {
    run_factorize(fac, rec);
    write_manifest(manifest.empty() ? fac.model + ".manifest.json" : manifest, "factorize", json(fac), fac.train.seed,
                   jobs, rec);
  } else if (c_enc->parsed()) {
    run_encode(enc, rec);
    write_manifest(manifest.empty() ? enc.output + ".manifest.json" : manifest, "encode", json(enc), 0, jobs, rec);
  } else if (c_ev->parsed()) {
    run_evaluate(ev, jobs, quiet, rec);
    write_manifest(manifest.empty() ? join_path(ev.out, "manifest.json") : manifest, "evaluate", json(ev),
                   ev.train.seed, jobs, rec);
  } else if (c_sq->parsed()) {
    run_select_q(sq, jobs, rec);
    write_manifest(manifest.empty() ? join_path(sq.out, "manifest.json") : manifest, "select-q", json(sq),
                   sq.train.seed, jobs, rec);
  } else if (c_be->parsed()) {
    run_bench(be, rec);
    write_manifest(manifest.empty() ? join_path(be.out, "manifest.json") : manifest, "bench", json(be), be.data_seed,
                   jobs, rec);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const gmf::ParseError& e) {
    std::cerr << "gmf: parse error: " << e.what() << '\n';
    return kParse;
  } catch (const gmf::ValidationError& e) {
    std::cerr << "gmf: invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const gmf::DivergenceError& e) {
    std::cerr << "gmf: diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const gmf::IoError& e) {
    std::cerr << "gmf: i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "gmf: i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "gmf: error: " << e.what() << '\n';
    return kOther;
  }
}
