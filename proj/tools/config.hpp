#pragma once

// Flat key=value configuration with [section] headers. Keys before the first
// header are shared by every subcommand; a subcommand reads those plus its
// own section and ignores the others.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace npl::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFile {
  // section name ("" for the shared block) -> key -> raw value
  std::map<std::string, std::map<std::string, std::string>> sections;
};

/// Throws ConfigError with a line number on malformed lines or duplicate keys.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::filesystem::path& path);

/// Resolved parameters of one subcommand. Every key has a default; values
/// are kept as text so the manifest echoes exactly what was used.
class Params {
 public:
  Params(std::string command, std::vector<std::pair<std::string, std::string>> defaults);

  /// Applies the shared block, then the command's section. Unknown keys throw.
  void apply(const ConfigFile& file);
  /// One override, e.g. from a flag. Unknown keys throw.
  void set(const std::string& key, const std::string& value);

  const std::string& command() const { return command_; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string text(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;  // comma-separated
  std::vector<double> reals(const std::string& key) const;
  bool has_value(const std::string& key) const { return !text(key).empty(); }

 private:
  std::string command_;
  std::map<std::string, std::string> values_;
};

}  // namespace npl::cli
