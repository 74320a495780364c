#pragma once

// Flat `key = value` configuration files. Blank lines and '#' comments are
// ignored; later keys override earlier ones.

#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "cpcomposer/error.hpp"

namespace cpc {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig c;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'key = value'", no);
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError("empty key", no);
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != it->second.size()) throw PreconditionError("config: '" + key + "' is not a number: " + it->second);
    return v;
  }

  std::size_t get(const std::string& key, std::size_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw PreconditionError("config: '" + key + "' is not a non-negative integer: " + s);
    }
    return static_cast<std::size_t>(std::stoull(s));
  }

  /// Throws if any key is outside `known`; catches typos in config files.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
      if (!known.count(k)) throw PreconditionError("config: unknown key '" + k + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace cpc
