#pragma once

// Flat `key = value` config files (UTF-8, '#' comments), mapping directly to
// the config structs.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wcc/data_error.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

class KvConfig {
 public:
  static KvConfig parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream is(text);
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw DataError(DataError::Kind::kBadFormat,
                        "config: line " + std::to_string(lineno) + " is not 'key = value'");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string val = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw DataError(DataError::Kind::kBadFormat,
                        "config: empty key on line " + std::to_string(lineno));
      cfg.values_[key] = val;
    }
    return cfg;
  }

  static KvConfig parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError(DataError::Kind::kMissingFile, "cannot open config: " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return parse_string(os.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  long get_long(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw DataError(DataError::Kind::kBadFormat,
                      "config: '" + key + "' = '" + it->second + "' is not an integer");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw DataError(DataError::Kind::kBadFormat,
                      "config: '" + key + "' = '" + it->second + "' is not a number");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw DataError(DataError::Kind::kBadFormat, "config: '" + key + "' is not a boolean");
  }

  // Comma-separated integer list, e.g. "1,2,4,3,2".
  std::vector<long> get_long_list(const std::string& key, std::vector<long> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<long> out;
    std::istringstream is(it->second);
    std::string item;
    while (std::getline(is, item, ',')) {
      try {
        out.push_back(std::stol(trim(item)));
      } catch (const std::exception&) {
        throw DataError(DataError::Kind::kBadFormat,
                        "config: '" + key + "' has a non-integer element '" + item + "'");
      }
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace wcc
