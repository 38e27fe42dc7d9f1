#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsharp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat "section.key = value" config. Lines starting with '#' are
/// comments; duplicate keys and (at validation time) unknown keys are
/// hard errors that name the offending line.
class Config {
 public:
  static Config parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                          stripped + "'");
      const std::string key = trim(stripped.substr(0, eq));
      const std::string value = trim(stripped.substr(eq + 1));
      if (key.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      const auto it = cfg.entries_.find(key);
      if (it != cfg.entries_.end())
        throw ConfigError("duplicate key '" + key + "' at lines " +
                          std::to_string(it->second.line) + " and " + std::to_string(line_no));
      cfg.entries_[key] = {value, line_no};
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second.value;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    if (!has(key)) set(key, fallback);
    return get_string(key);
  }

  double get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) set(key, format_double(fallback));
    return get_double(key);
  }

  long long get_int(const std::string& key) const {
    const std::string v = get_string(key);
    try {
      std::size_t pos = 0;
      const long long i = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return i;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) {
    if (!has(key)) set(key, std::to_string(fallback));
    return get_int(key);
  }

  bool get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) set(key, fallback ? "true" : "false");
    return get_bool(key);
  }

  void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

  /// Every present key must be in the allowed set.
  void validate_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, entry] : entries_) {
      if (!allowed.count(key))
        throw ConfigError("unknown key '" + key + "'" +
                          (entry.line > 0 ? " at line " + std::to_string(entry.line) : ""));
    }
  }

  /// Canonical serialization (sorted keys); parse(serialize(c)) == c.
  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [key, entry] : entries_) out << key << " = " << entry.value << "\n";
    return out.str();
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) out.push_back(key);
    return out;
  }

  bool operator==(const Config& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (const auto& [key, entry] : entries_) {
      const auto it = other.entries_.find(key);
      if (it == other.entries_.end() || it->second.value != entry.value) return false;
    }
    return true;
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace qsharp
