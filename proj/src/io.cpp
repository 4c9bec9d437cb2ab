#include "npl/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "npl/errors.hpp"

namespace npl {

namespace {

using nlohmann::json;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

const char* kStepColumns[] = {"step",     "loss",         "error_norm", "switch_count", "nu",
                              "kv_trace", "kv_frobenius", "kf_trace",   "kf_frobenius"};

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) out += (c ? "," : "") + t.columns[c];
  out += '\n';
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw DimensionError("table row width differs from header");
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
    out += '\n';
  }
  return out;
}

Table parse_csv_table(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("CSV: missing header");
  Table t;
  for (auto c : split(lines[0], ',')) t.columns.emplace_back(c);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != t.columns.size())
      throw FormatError("CSV: line " + std::to_string(i + 1) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(t.columns.size()));
    Vector row;
    for (auto f : fields) row.push_back(parse_double(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string to_csv(const GramMatrix& g) {
  std::string out = "kind=" + std::string(to_string(g.kind)) + ",n=" + std::to_string(g.n()) + "\n";
  for (std::size_t i = 0; i < g.n(); ++i) {
    for (std::size_t j = 0; j < g.values.cols(); ++j) out += (j ? "," : "") + format_double(g(i, j));
    out += '\n';
  }
  return out;
}

GramMatrix parse_gram_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("Gram CSV: missing header");
  const auto head = split(lines[0], ',');
  if (head.size() != 2 || !head[0].starts_with("kind=") || !head[1].starts_with("n="))
    throw FormatError("Gram CSV: header must read kind=<kind>,n=<n>");
  GramMatrix g;
  try {
    g.kind = parse_gram_kind(head[0].substr(5));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("Gram CSV: ") + e.what());
  }
  const std::size_t n = std::size_t(parse_double(head[1].substr(2)));
  if (lines.size() != n + 1) throw FormatError("Gram CSV: row count does not match n");
  g.values = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = split(lines[i + 1], ',');
    if (f.size() != n) throw FormatError("Gram CSV: row " + std::to_string(i) + " has the wrong width");
    for (std::size_t j = 0; j < n; ++j) g.values(i, j) = parse_double(f[j]);
  }
  return g;
}

Table trajectory_table(const Trajectory& t) {
  Table out;
  out.columns.assign(std::begin(kStepColumns), std::end(kStepColumns));
  for (const auto& s : t.steps)
    out.rows.push_back({double(s.step), s.loss, s.error_norm, double(s.switch_count), s.metrics.nu,
                        s.metrics.kv_trace, s.metrics.kv_frobenius, s.metrics.kf_trace, s.metrics.kf_frobenius});
  return out;
}

std::vector<StepRecord> steps_from_table(const Table& t) {
  if (t.columns != std::vector<std::string>(std::begin(kStepColumns), std::end(kStepColumns)))
    throw FormatError("trajectory CSV: unexpected columns");
  std::vector<StepRecord> steps;
  for (const auto& r : t.rows) {
    StepRecord s;
    s.step = std::size_t(r[0]);
    s.loss = r[1];
    s.error_norm = r[2];
    s.switch_count = std::size_t(r[3]);
    s.metrics = {r[4], r[5], r[6], r[7], r[8]};
    steps.push_back(s);
  }
  return steps;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (double v : m.row(i)) row.push_back(number(v));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const std::size_t r = j.size();
  const std::size_t c = r ? j[0].size() : 0;
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (j[i].size() != c) throw FormatError("JSON matrix: ragged rows");
    for (std::size_t k = 0; k < c; ++k) m(i, k) = number(j[i][k]);
  }
  return m;
}

json to_json(const Trajectory& t) {
  json j;
  j["steps"] = json::array();
  for (const auto& s : t.steps)
    j["steps"].push_back({{"step", s.step},
                          {"loss", number(s.loss)},
                          {"error_norm", number(s.error_norm)},
                          {"switch_count", s.switch_count},
                          {"nu", number(s.metrics.nu)},
                          {"kv_trace", number(s.metrics.kv_trace)},
                          {"kv_frobenius", number(s.metrics.kv_frobenius)},
                          {"kf_trace", number(s.metrics.kf_trace)},
                          {"kf_frobenius", number(s.metrics.kf_frobenius)}});
  j["errors"] = json::array();
  for (const auto& e : t.errors) {
    json row = json::array();
    for (double v : e) row.push_back(number(v));
    j["errors"].push_back(std::move(row));
  }
  j["switch_instants"] = t.switch_instants;
  j["switches"] = json::array();
  for (const auto& ev : t.switches) {
    json flips = json::array();
    for (const auto& f : ev.flips) flips.push_back({f.example, f.layer, f.unit});
    j["switches"].push_back({{"step", ev.step}, {"flips", flips}});
  }
  j["snapshots"] = json::array();
  for (const auto& s : t.snapshots)
    j["snapshots"].push_back({{"step", s.step},
                              {"ntk", to_json(s.ntk)},
                              {"npk", to_json(s.npk)},
                              {"lambda", to_json(s.lambda)},
                              {"kv", to_json(s.kv)},
                              {"kf", to_json(s.kf)}});
  j["epochs"] = json::array();
  for (const auto& e : t.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", number(e.train_loss)},
                           {"train_accuracy", number(e.train_accuracy)},
                           {"test_accuracy", number(e.test_accuracy)}});
  return j;
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  try {
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.step = s.at("step").get<std::size_t>();
      r.loss = number(s.at("loss"));
      r.error_norm = number(s.at("error_norm"));
      r.switch_count = s.at("switch_count").get<std::size_t>();
      r.metrics = {number(s.at("nu")), number(s.at("kv_trace")), number(s.at("kv_frobenius")),
                   number(s.at("kf_trace")), number(s.at("kf_frobenius"))};
      t.steps.push_back(r);
    }
    for (const auto& e : j.at("errors")) {
      Vector row;
      for (const auto& v : e) row.push_back(number(v));
      t.errors.push_back(std::move(row));
    }
    t.switch_instants = j.at("switch_instants").get<std::vector<std::size_t>>();
    for (const auto& ev : j.at("switches")) {
      SwitchEvent s{ev.at("step").get<std::size_t>(), {}};
      for (const auto& f : ev.at("flips"))
        s.flips.push_back({f.at(0).get<std::size_t>(), f.at(1).get<std::size_t>(), f.at(2).get<std::size_t>()});
      t.switches.push_back(std::move(s));
    }
    for (const auto& s : j.at("snapshots"))
      t.snapshots.push_back({s.at("step").get<std::size_t>(), matrix_from_json(s.at("ntk")),
                             matrix_from_json(s.at("npk")), matrix_from_json(s.at("lambda")),
                             matrix_from_json(s.at("kv")), matrix_from_json(s.at("kf"))});
    for (const auto& e : j.at("epochs"))
      t.epochs.push_back({e.at("epoch").get<std::size_t>(), number(e.at("train_loss")),
                          number(e.at("train_accuracy")), number(e.at("test_accuracy"))});
  } catch (const json::exception& e) {
    throw FormatError(std::string("trajectory JSON: ") + e.what());
  }
  return t;
}

json to_json(const SpectrumReport& r) {
  json j{{"eigenvalues", r.eigenvalues}, {"ecdf", r.ecdf}, {"rho_max", r.rho_max}, {"rho_min", r.rho_min}};
  if (r.predicted)
    j["predicted"] = {{"rho_max", r.predicted->rho_max},
                      {"rho_min", r.predicted->rho_min},
                      {"min_multiplicity", r.predicted->min_multiplicity}};
  return j;
}

Table spectrum_table(const SpectrumReport& r) {
  Table t{{"index", "eigenvalue", "ecdf"}, {}};
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) t.rows.push_back({double(i), r.eigenvalues[i], r.ecdf[i]});
  return t;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_csv(const std::filesystem::path& path, const Table& t) { write_text(path, to_csv(t)); }
void write_csv(const std::filesystem::path& path, const GramMatrix& g) { write_text(path, to_csv(g)); }
void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace npl
