#pragma once

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gmf/classify.hpp"
#include "gmf/error.hpp"
#include "gmf/factorize.hpp"
#include "gmf/format.hpp"
#include "gmf/loss.hpp"
#include "gmf/matrix.hpp"

namespace gmf {

class IoError : public Error {
 public:
  using Error::Error;
};

namespace io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Field separator of a delimited text table.
enum class Delimiter { Tab, Comma, Whitespace };

inline Delimiter detect_delimiter(std::string_view line) {
  if (line.find('\t') != std::string_view::npos) return Delimiter::Tab;
  if (line.find(',') != std::string_view::npos) return Delimiter::Comma;
  return Delimiter::Whitespace;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line, Delimiter d) {
  std::vector<std::string> out;
  if (d == Delimiter::Whitespace) {
    std::size_t k = 0;
    while (k < line.size()) {
      while (k < line.size() && (line[k] == ' ' || line[k] == '\r')) ++k;
      if (k >= line.size()) break;
      std::size_t e = k;
      while (e < line.size() && line[e] != ' ' && line[e] != '\r') ++e;
      out.emplace_back(trim(line.substr(k, e - k)));
      k = e;
    }
    return out;
  }
  const char sep = d == Delimiter::Tab ? '\t' : ',';
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find('\n', start);
    const std::size_t end = pos == std::string_view::npos ? text.size() : pos;
    lines.push_back(text.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return lines;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

/// Parses a delimited numeric table. The delimiter (tab, comma or spaces) is
/// taken from the first non-blank line. A first row containing non-numeric
/// fields is a header of column ids; a non-numeric first field on data rows
/// makes the first column row ids. Rows are variables, columns samples,
/// unless `transpose` is set.
inline DataMatrix parse_matrix(std::string_view text, bool transpose = false) {
  const auto raw = lines_of(text);
  std::vector<std::pair<std::size_t, std::string_view>> lines;  // (1-based line number, text)
  for (std::size_t k = 0; k < raw.size(); ++k)
    if (!is_blank(raw[k])) lines.emplace_back(k + 1, raw[k]);
  if (lines.empty()) throw ParseError("matrix file is empty");

  const Delimiter delim = detect_delimiter(lines.front().second);
  auto numeric = [](const std::string& s) {
    double v;
    return parse_double(s, v);
  };

  std::vector<std::vector<std::string>> rows;
  rows.reserve(lines.size());
  for (const auto& [no, line] : lines) rows.push_back(split(line, delim));

  bool header = false;
  for (std::size_t c = 1; c < rows.front().size(); ++c) header = header || !numeric(rows.front()[c]);
  if (rows.front().size() == 1 && !numeric(rows.front()[0])) header = true;
  const std::size_t first_data = header ? 1 : 0;
  if (first_data >= rows.size()) throw ParseError("matrix file has a header but no data rows");

  const bool row_ids = !numeric(rows[first_data].front());
  const std::size_t width = rows[first_data].size();
  const std::size_t ncols = width - (row_ids ? 1 : 0);
  if (ncols == 0) throw ParseError("matrix has no numeric columns", lines[first_data].first, 1);

  DataMatrix out;
  out.values.resize(static_cast<Index>(rows.size() - first_data), static_cast<Index>(ncols));
  if (header) {
    const auto& h = rows.front();
    if (h.size() == ncols) {
      out.col_ids = h;
    } else if (h.size() == ncols + 1) {
      out.col_ids.assign(h.begin() + 1, h.end());
    } else {
      throw ParseError("header has " + std::to_string(h.size()) + " fields, expected " + std::to_string(ncols),
                       lines.front().first, 1);
    }
  }
  for (std::size_t r = first_data; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    const std::size_t line_no = lines[r].first;
    if (fields.size() != width) {
      throw ParseError("row has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(width),
                       line_no, std::min(fields.size(), width) + 1);
    }
    if (row_ids) out.row_ids.push_back(fields.front());
    for (std::size_t c = 0; c < ncols; ++c) {
      const std::string& f = fields[c + (row_ids ? 1 : 0)];
      double v = 0.0;
      if (!parse_double(f, v)) {
        throw ParseError("not a number: '" + f + "'", line_no, c + (row_ids ? 2 : 1));
      }
      out.values(static_cast<Index>(r - first_data), static_cast<Index>(c)) = v;
    }
  }
  if (transpose) {
    out.values.transposeInPlace();
    std::swap(out.row_ids, out.col_ids);
  }
  validate(out);
  return out;
}

inline DataMatrix read_matrix(const std::string& path, bool transpose = false) {
  const std::string text = read_file(path);
  try {
    return parse_matrix(text, transpose);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Tab-separated, shortest round-trip numbers, ids written when present.
inline std::string format_matrix(const DataMatrix& x) {
  std::string out;
  if (x.has_col_ids()) {
    if (x.has_row_ids()) out += "id";
    for (std::size_t c = 0; c < x.col_ids.size(); ++c) {
      if (c > 0 || x.has_row_ids()) out += '\t';
      out += x.col_ids[c];
    }
    out += '\n';
  }
  for (Index i = 0; i < x.rows(); ++i) {
    if (x.has_row_ids()) out += x.row_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < x.cols(); ++j) {
      if (j > 0 || x.has_row_ids()) out += '\t';
      out += format_double(x.values(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_matrix(const std::string& path, const DataMatrix& x) { write_file(path, format_matrix(x)); }

// ---------------------------------------------------------------------------
// Model file

inline std::string format_model(const FactorModel& m) {
  std::string out = "gmf v1 p=" + std::to_string(m.p()) + " n=" + std::to_string(m.n()) +
                    " q=" + std::to_string(m.q()) + " loss=" + m.config.loss.to_string() +
                    " seed=" + std::to_string(m.config.seed) + " objective=" + format_double(m.final_objective) +
                    "\n";
  auto rows = [&out](const Matrix& x) {
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) {
        if (j > 0) out += ' ';
        out += format_double(x(i, j));
      }
      out += '\n';
    }
  };
  rows(m.A);
  rows(m.B);
  return out;
}

/// Inverse of format_model. Only the header fields are restored into
/// config; the trace is not stored in model files.
inline FactorModel parse_model(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front().rfind("gmf v1 ", 0) != 0) {
    throw ParseError("not a gmf v1 model file", 1, 1);
  }
  std::map<std::string, std::string> fields;
  for (const auto& tok : split(lines.front(), Delimiter::Whitespace)) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"p", "n", "q", "loss", "seed", "objective"}) {
    if (!fields.count(key)) throw ParseError(std::string("model header lacks '") + key + "'", 1, 1);
  }
  auto as_index = [&](const std::string& key) -> Index {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(fields[key], &used);
      if (used != fields[key].size() || v < 1) throw std::invalid_argument(key);
      return static_cast<Index>(v);
    } catch (const std::exception&) {
      throw ParseError("bad model header value for '" + key + "'", 1, 1);
    }
  };
  FactorModel m;
  const Index p = as_index("p"), n = as_index("n"), q = as_index("q");
  m.config.q = q;
  m.config.loss = LossSpec::parse(fields["loss"]);
  try {
    std::size_t used = 0;
    m.config.seed = std::stoull(fields["seed"], &used);
    if (used != fields["seed"].size()) throw std::invalid_argument("seed");
  } catch (const std::exception&) {
    throw ParseError("bad model header value for 'seed'", 1, 1);
  }
  if (!parse_double(fields["objective"], m.final_objective)) {
    throw ParseError("bad model header value for 'objective'", 1, 1);
  }

  auto read_block = [&](std::size_t first_line, Index rows, Index cols) {
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      const std::size_t ln = first_line + static_cast<std::size_t>(i);
      if (ln >= lines.size()) throw ParseError("model file truncated", ln + 1, 1);
      const auto vals = split(lines[ln], Delimiter::Whitespace);
      if (static_cast<Index>(vals.size()) != cols) {
        throw ParseError("expected " + std::to_string(cols) + " values", ln + 1, 1);
      }
      for (Index j = 0; j < cols; ++j) {
        if (!parse_double(vals[static_cast<std::size_t>(j)], out(i, j))) {
          throw ParseError("not a number", ln + 1, static_cast<std::size_t>(j) + 1);
        }
      }
    }
    return out;
  };
  m.A = read_block(1, p, q);
  m.B = read_block(1 + static_cast<std::size_t>(p), q, n);
  return m;
}

inline void save_model(const std::string& path, const FactorModel& m) { write_file(path, format_model(m)); }

inline FactorModel load_model(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return parse_model(text);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Per-sweep objective trace as CSV. Wall-clock times are left out so the
/// file is reproducible; they go to the run manifest instead.
inline std::string format_trace(const TrainTrace& trace) {
  std::string out = "iter,objective,best,lambda\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + ',' + format_double(r.objective) + ',' + format_double(r.best) + ',' +
           format_double(r.lambda) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels

/// Labels file rows: sample id and class label, comma/tab/space separated.
/// Class indices follow first appearance of each label.
struct LabelTable {
  std::vector<std::string> sample_ids;
  std::vector<std::string> labels;
  std::vector<std::string> classes;  // index -> label text
};

inline LabelTable parse_labels(std::string_view text) {
  LabelTable t;
  const auto lines = lines_of(text);
  Delimiter d = Delimiter::Whitespace;
  bool detected = false;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (is_blank(lines[k])) continue;
    if (!detected) {
      d = detect_delimiter(lines[k]);
      detected = true;
    }
    const auto f = split(lines[k], d);
    if (f.size() != 2) throw ParseError("labels row needs exactly 2 fields", k + 1, 1);
    if (t.sample_ids.empty() && (f[0] == "sample_id" || f[0] == "sample" || f[0] == "id")) continue;
    t.sample_ids.push_back(f[0]);
    t.labels.push_back(f[1]);
    if (std::find(t.classes.begin(), t.classes.end(), f[1]) == t.classes.end()) t.classes.push_back(f[1]);
  }
  if (t.sample_ids.empty()) throw ParseError("labels file has no rows");
  detail::check_unique(t.sample_ids, "sample");
  return t;
}

inline LabelTable read_labels(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return parse_labels(text);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Label vector aligned with the matrix columns: by id when the matrix has
/// column ids, otherwise by order. Mismatches list every offending id.
inline LabelVector align_labels(const LabelTable& t, const DataMatrix& x) {
  std::vector<int> idx;
  auto class_of = [&](const std::string& label) {
    return static_cast<int>(std::find(t.classes.begin(), t.classes.end(), label) - t.classes.begin());
  };
  if (x.has_col_ids()) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < t.sample_ids.size(); ++k) pos[t.sample_ids[k]] = k;
    std::vector<std::string> missing, unknown;
    for (const auto& id : x.col_ids) {
      auto it = pos.find(id);
      if (it == pos.end()) {
        missing.push_back(id);
      } else {
        idx.push_back(class_of(t.labels[it->second]));
      }
    }
    std::unordered_map<std::string, bool> in_matrix;
    for (const auto& id : x.col_ids) in_matrix[id] = true;
    for (const auto& id : t.sample_ids)
      if (!in_matrix.count(id)) unknown.push_back(id);
    if (!missing.empty() || !unknown.empty()) {
      std::string msg = "labels do not match matrix samples;";
      if (!missing.empty()) {
        msg += " unlabeled samples:";
        for (const auto& s : missing) msg += " " + s;
        msg += ";";
      }
      if (!unknown.empty()) {
        msg += " unknown sample ids in labels:";
        for (const auto& s : unknown) msg += " " + s;
      }
      throw ValidationError(msg);
    }
  } else {
    if (t.labels.size() != static_cast<std::size_t>(x.cols())) {
      throw ValidationError("labels file has " + std::to_string(t.labels.size()) + " rows but the matrix has " +
                            std::to_string(x.cols()) + " samples");
    }
    for (const auto& l : t.labels) idx.push_back(class_of(l));
  }
  return LabelVector(std::move(idx), static_cast<int>(t.classes.size()));
}

}  // namespace io
}  // namespace gmf
