#pragma once

// CSV and JSON emitters with parse-back. Numbers use the shortest decimal
// form that round-trips; non-finite values are written as nan/inf in CSV and
// null in JSON.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "npl/kernels.hpp"
#include "npl/studies.hpp"
#include "npl/trainer.hpp"

namespace npl {

std::string format_double(double v);
/// Throws FormatError on trailing garbage or an empty field.
double parse_double(std::string_view s);

struct Table {
  std::vector<std::string> columns;
  std::vector<Vector> rows;
};

std::string to_csv(const Table& t);
Table parse_csv_table(std::string_view text);

/// Header `kind=<kind>,n=<n>` followed by n rows.
std::string to_csv(const GramMatrix& g);
GramMatrix parse_gram_csv(std::string_view text);

/// One row per step: step, loss, error_norm, switch_count, nu, kv/kf norms.
Table trajectory_table(const Trajectory& t);
std::vector<StepRecord> steps_from_table(const Table& t);

nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SpectrumReport& r);
Table spectrum_table(const SpectrumReport& r);
nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

/// Write helpers; failures raise std::runtime_error naming the path.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const Table& t);
void write_csv(const std::filesystem::path& path, const GramMatrix& g);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace npl
