#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/error.hpp"

namespace ltbr {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

// Flat `key = value` configuration. Blank lines and lines starting with '#'
// are skipped; keys may not repeat.
class KvConfig {
 public:
  static KvConfig parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        fail(Err::ConfigError, "config line " + std::to_string(lineno) + " has no '='");
      std::string k = detail::trim(t.substr(0, eq));
      std::string v = detail::trim(t.substr(eq + 1));
      if (k.empty())
        fail(Err::ConfigError, "config line " + std::to_string(lineno) + " has an empty key");
      if (cfg.has(k)) fail(Err::ConfigError, "config repeats key '" + k + "'");
      cfg.pairs_.emplace_back(k, v);
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::IoError, "cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
  }

  bool has(const std::string& k) const {
    for (const auto& kv : pairs_)
      if (kv.first == k) return true;
    return false;
  }

  std::string get_str(const std::string& k) const {
    for (const auto& kv : pairs_)
      if (kv.first == k) return kv.second;
    fail(Err::ConfigError, "config is missing key '" + k + "'");
  }

  long long get_int(const std::string& k) const {
    std::string v = get_str(k);
    std::size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (...) {
      fail(Err::ConfigError, "config key '" + k + "' is not an integer: '" + v + "'");
    }
    if (used != v.size())
      fail(Err::ConfigError, "config key '" + k + "' is not an integer: '" + v + "'");
    return out;
  }

  std::uint64_t get_u64(const std::string& k) const {
    std::string v = get_str(k);
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
      out = std::stoull(v, &used);
    } catch (...) {
      fail(Err::ConfigError, "config key '" + k + "' is not an unsigned integer: '" + v + "'");
    }
    if (used != v.size() || (!v.empty() && v[0] == '-'))
      fail(Err::ConfigError, "config key '" + k + "' is not an unsigned integer: '" + v + "'");
    return out;
  }

  double get_double(const std::string& k) const {
    std::string v = get_str(k);
    std::size_t used = 0;
    double out = 0;
    try {
      out = std::stod(v, &used);
    } catch (...) {
      fail(Err::ConfigError, "config key '" + k + "' is not a number: '" + v + "'");
    }
    if (used != v.size())
      fail(Err::ConfigError, "config key '" + k + "' is not a number: '" + v + "'");
    return out;
  }

  bool get_bool(const std::string& k) const {
    std::string v = get_str(k);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(Err::ConfigError, "config key '" + k + "' is not a boolean: '" + v + "'");
  }

  // comma-separated positive sizes, e.g. "1024,1024"
  std::vector<std::size_t> get_size_list(const std::string& k) const {
    std::string v = get_str(k);
    std::vector<std::size_t> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
      std::string t = detail::trim(item);
      std::size_t used = 0;
      long long x = 0;
      try {
        x = std::stoll(t, &used);
      } catch (...) {
        fail(Err::ConfigError, "config key '" + k + "' has a bad list item: '" + t + "'");
      }
      if (used != t.size() || x <= 0)
        fail(Err::ConfigError, "config key '" + k + "' has a bad list item: '" + t + "'");
      out.push_back(static_cast<std::size_t>(x));
    }
    if (out.empty()) fail(Err::ConfigError, "config key '" + k + "' is an empty list");
    return out;
  }

  void set(const std::string& k, const std::string& v) {
    for (auto& kv : pairs_)
      if (kv.first == k) {
        kv.second = v;
        return;
      }
    pairs_.emplace_back(k, v);
  }

  // Rejects keys outside the allowed set, catching config typos early.
  void restrict_keys(const std::vector<std::string>& allowed) const {
    for (const auto& kv : pairs_)
      if (std::find(allowed.begin(), allowed.end(), kv.first) == allowed.end())
        fail(Err::ConfigError, "unknown config key '" + kv.first + "'");
  }

  // Deterministic `key = value` listing, sorted by key.
  std::string render() const {
    std::vector<std::pair<std::string, std::string>> sorted = pairs_;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (const auto& kv : sorted) out += kv.first + " = " + kv.second + "\n";
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

 private:
  std::vector<std::pair<std::string, std::string>> pairs_;
};

}  // namespace ltbr
