#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kdreplica/core/params.hpp"

namespace kdreplica {

/// Invalid or unreadable configuration; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One `key = value` entry. Scalars have a single value; `[a, b, ...]`,
/// `linspace(a, b, n)` and `logspace(a, b, n)` produce lists.
struct ConfigValue {
  std::vector<std::string> items;
  bool is_list = false;
};

/// Every key a sweep file may set. Model parameters may be lists (sweep
/// axes); `modes` is always a list; everything else is a scalar.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "name",        "alpha",       "delta",        "rho",
      "eta",         "lambda_t",    "lambda_s",     "chi",
      "temp",        "eps_smooth",  "modes",        "n_dim",
      "n_seeds",     "seed",        "n_test",       "train_tol",
      "sim_teacher", "simulate_student", "optimize", "optimize_min",
      "optimize_max", "damping",    "tol",          "max_iters",
      "quad_order",  "anderson",    "divergence_q", "out"};
  return keys;
}

inline bool is_config_key(std::string_view key) {
  const auto& keys = config_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') &&
      s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline double to_number(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
  }
  if (used != s.size()) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_commas(std::string_view body) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : body) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

/// Parses the right-hand side of one assignment.
inline ConfigValue parse_value(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  ConfigValue v;
  if (text.empty()) throw ConfigError("config: empty value for '" + key + "'");
  if (text.front() == '[') {
    if (text.back() != ']') {
      throw ConfigError("config: unterminated list for '" + key + "'");
    }
    v.is_list = true;
    for (auto& item : split_commas(text.substr(1, text.size() - 2))) {
      if (item.empty()) throw ConfigError("config: empty list item in '" + key + "'");
      v.items.push_back(unquote(item));
    }
    if (v.items.empty()) throw ConfigError("config: empty list for '" + key + "'");
    return v;
  }
  for (const char* fn : {"linspace", "logspace"}) {
    const std::string prefix = std::string(fn) + "(";
    if (text.rfind(prefix, 0) == 0) {
      if (text.back() != ')') {
        throw ConfigError("config: unterminated " + std::string(fn) + " for '" +
                          key + "'");
      }
      const auto args =
          split_commas(text.substr(prefix.size(), text.size() - prefix.size() - 1));
      if (args.size() != 3) {
        throw ConfigError("config: " + std::string(fn) +
                          "(start, stop, count) takes 3 arguments");
      }
      const double a = to_number(args[0], key);
      const double b = to_number(args[1], key);
      const double n = to_number(args[2], key);
      if (!(n >= 1) || n != std::floor(n)) {
        throw ConfigError("config: " + std::string(fn) + " count must be a positive integer");
      }
      v.is_list = true;
      const int count = static_cast<int>(n);
      for (int i = 0; i < count; ++i) {
        const double t = count == 1 ? a : a + (b - a) * i / (count - 1);
        v.items.push_back(format_number(fn[1] == 'o' ? std::pow(10.0, t) : t));
      }
      return v;
    }
  }
  v.items.push_back(unquote(text));
  return v;
}

}  // namespace detail

/// Flat key/value configuration with file < environment < command-line
/// precedence.
class Config {
 public:
  /// Parses `key = value` lines; `#` starts a comment, lists may span lines.
  static Config parse(const std::string& text, const std::string& origin = "") {
    Config cfg;
    std::istringstream in(text);
    std::string line, pending;
    int lineno = 0, start = 0;
    auto where = [&](int n) {
      return (origin.empty() ? std::string("line ") : origin + ":") +
             std::to_string(n);
    };
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      if (pending.empty()) {
        if (detail::trim(line).empty()) continue;
        start = lineno;
      }
      pending += line + " ";
      const auto open = std::count(pending.begin(), pending.end(), '[');
      const auto close = std::count(pending.begin(), pending.end(), ']');
      if (open > close) continue;
      const auto eq = pending.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config " + where(start) + ": expected 'key = value'");
      }
      const std::string key = detail::trim(pending.substr(0, eq));
      try {
        cfg.set(key, detail::parse_value(key, pending.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (" + where(start) + ")");
      }
      pending.clear();
    }
    if (!pending.empty()) {
      throw ConfigError("config " + where(start) + ": unterminated list");
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, ConfigValue value) {
    if (!is_config_key(key)) throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = std::move(value);
  }

  /// `key=value` as given on the command line.
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected key=value, got '" + assignment + "'");
    }
    const std::string key = detail::trim(assignment.substr(0, eq));
    set(key, detail::parse_value(key, assignment.substr(eq + 1)));
  }

  /// KDR_<KEY> (upper case) overrides the corresponding key.
  void apply_env(const char* prefix = "KDR_") {
    for (const auto& key : config_keys()) {
      std::string name = prefix;
      for (char c : key) {
        name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
      if (const char* v = std::getenv(name.c_str())) {
        set(key, detail::parse_value(key, v));
      }
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const ConfigValue& at(const std::string& key) const { return values_.at(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    return scalar(key);
  }

  double get_number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return detail::to_number(scalar(key), key);
  }

  long long get_integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const std::string s = scalar(key);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config: '" + key + "' expects an integer, got '" + s + "'");
  }

  unsigned long long get_unsigned(const std::string& key,
                                  unsigned long long fallback) const {
    if (!has(key)) return fallback;
    const std::string s = scalar(key);
    try {
      std::size_t used = 0;
      if (!s.empty() && s[0] != '-') {
        const unsigned long long v = std::stoull(s, &used);
        if (used == s.size()) return v;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + s + "'");
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = scalar(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + s + "'");
  }

  std::vector<double> get_numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : values_.at(key).items) out.push_back(detail::to_number(s, key));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key) const {
    return values_.at(key).items;
  }

  /// Canonical text form, keys in the fixed order of config_keys().
  std::string dump() const {
    std::string out;
    for (const auto& key : config_keys()) {
      auto it = values_.find(key);
      if (it == values_.end()) continue;
      out += key + " = ";
      const auto& v = it->second;
      if (v.is_list) {
        out += "[";
        for (std::size_t i = 0; i < v.items.size(); ++i) {
          out += (i ? ", " : "") + v.items[i];
        }
        out += "]";
      } else {
        out += v.items.front();
      }
      out += "\n";
    }
    return out;
  }

 private:
  std::string scalar(const std::string& key) const {
    const auto& v = values_.at(key);
    if (v.is_list) throw ConfigError("config: '" + key + "' must be a scalar");
    return v.items.front();
  }

  std::map<std::string, ConfigValue> values_;
};

}  // namespace kdreplica
