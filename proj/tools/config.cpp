#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace npl::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
  ConfigFile f;
  f.sections[""];
  std::string section;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      f.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    if (!f.sections[section].emplace(key, trim(line.substr(eq + 1))).second)
      throw ConfigError("config line " + std::to_string(no) + ": duplicate key '" + key + "'");
  }
  return f;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Params::Params(std::string command, std::vector<std::pair<std::string, std::string>> defaults)
    : command_(std::move(command)), values_(defaults.begin(), defaults.end()) {}

void Params::apply(const ConfigFile& file) {
  for (const auto& name : {std::string(), command_}) {
    const auto it = file.sections.find(name);
    if (it == file.sections.end()) continue;
    for (const auto& [k, v] : it->second) set(k, v);
  }
}

void Params::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "' for " + command_);
  it->second = value;
}

std::string Params::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("parameter '" + key + "' was never declared");
  return it->second;
}

double Params::real(const std::string& key) const {
  const auto v = text(key);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t Params::u64(const std::string& key) const {
  const auto v = text(key);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t Params::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool Params::flag(const std::string& key) const {
  const auto v = text(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::size_t> Params::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(text(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size())
      throw ConfigError("config key '" + key + "': expected a comma-separated list of integers");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::vector<double> Params::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(text(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    double v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size())
      throw ConfigError("config key '" + key + "': expected a comma-separated list of numbers");
    out.push_back(v);
  }
  return out;
}

}  // namespace npl::cli
