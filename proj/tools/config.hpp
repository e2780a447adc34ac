#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sirld/sirld.hpp"

namespace sirld::cli {

/// Raised for anything wrong with the configuration itself (exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Section/key view over an INI file with typed, validated accessors.
class Config {
 public:
  Config() = default;

  static Config load(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      throw ConfigError("cannot open config file '" + file + "'");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Config c = parse(text);
    c.dir_ = std::filesystem::path(file).parent_path();
    return c;
  }

  static Config parse(const std::string& text) {
    Config c;
    c.text_ = text;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
  }

  const std::string& text() const noexcept { return text_; }

  bool has(const std::string& section, const std::string& key) const {
    return tree_.get_child_optional(section + "." + key).has_value();
  }

  std::optional<std::string> str(const std::string& section, const std::string& key) const {
    if (auto v = tree_.get_optional<std::string>(section + "." + key)) {
      return *v;
    }
    return std::nullopt;
  }

  std::string str(const std::string& section, const std::string& key, const std::string& fallback) const {
    return str(section, key).value_or(fallback);
  }

  double real(const std::string& section, const std::string& key) const {
    auto v = str(section, key);
    if (!v) {
      throw ConfigError("missing [" + section + "] " + key);
    }
    return to_real(section, key, *v);
  }

  double real(const std::string& section, const std::string& key, double fallback) const {
    auto v = str(section, key);
    return v ? to_real(section, key, *v) : fallback;
  }

  std::uint64_t whole(const std::string& section, const std::string& key) const {
    auto v = str(section, key);
    if (!v) {
      throw ConfigError("missing [" + section + "] " + key);
    }
    return to_whole(section, key, *v);
  }

  std::uint64_t whole(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    auto v = str(section, key);
    return v ? to_whole(section, key, *v) : fallback;
  }

  bool flag(const std::string& section, const std::string& key, bool fallback) const {
    auto v = str(section, key);
    if (!v) {
      return fallback;
    }
    if (*v == "true" || *v == "1" || *v == "yes") {
      return true;
    }
    if (*v == "false" || *v == "0" || *v == "no") {
      return false;
    }
    throw ConfigError("[" + section + "] " + key + ": expected a boolean, got '" + *v + "'");
  }

  std::vector<std::size_t> sizes(const std::string& section, const std::string& key) const {
    auto v = str(section, key);
    if (!v) {
      throw ConfigError("missing [" + section + "] " + key);
    }
    std::vector<std::size_t> out;
    std::istringstream in(*v);
    std::string item;
    while (std::getline(in, item, ',')) {
      out.push_back(to_whole(section, key, item));
    }
    if (out.empty()) {
      throw ConfigError("[" + section + "] " + key + " is empty");
    }
    return out;
  }

  /// Resolves a file reference relative to the config file and checks that it exists.
  std::string file(const std::string& section, const std::string& key) const {
    auto v = str(section, key);
    if (!v) {
      throw ConfigError("missing [" + section + "] " + key);
    }
    std::filesystem::path p(*v);
    if (p.is_relative() && !dir_.empty() && !std::filesystem::exists(p)) {
      p = dir_ / p;
    }
    if (!std::filesystem::exists(p)) {
      throw ConfigError("[" + section + "] " + key + ": file '" + *v + "' does not exist");
    }
    return p.string();
  }

  ModelParams model() const {
    ModelParams p{real("model", "lambda"), real("model", "p0"), real("model", "p1"), real("model", "T0")};
    p.validate();
    return p;
  }

  WeightDistribution distribution() const {
    const std::string kind = str("distribution", "kind", "constant");
    if (kind == "constant") {
      return WeightDistribution::constant(real("distribution", "value", 1.0));
    }
    if (kind == "bernoulli") {
      return WeightDistribution::bernoulli(real("distribution", "p"), real("distribution", "scale", 1.0));
    }
    if (kind == "exponential") {
      return WeightDistribution::exponential(real("distribution", "mean", 1.0));
    }
    if (kind == "uniform") {
      return WeightDistribution::uniform(real("distribution", "lo"), real("distribution", "hi"));
    }
    throw ConfigError("[distribution] kind: unknown law '" + kind + "'");
  }

  /// Number of grid intervals; the config gives the number of points.
  std::size_t intervals() const {
    const std::uint64_t points = whole("grid", "points", default_intervals + 1);
    if (points < 3) {
      throw ConfigError("[grid] points must be at least 3");
    }
    return points - 1;
  }

  std::uint64_t master_seed() const { return whole("seeds", "master", 0); }

 private:
  static double to_real(const std::string& section, const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size()) {
        throw std::invalid_argument(v);
      }
      return x;
    } catch (const std::logic_error&) {
      throw ConfigError("[" + section + "] " + key + ": expected a number, got '" + v + "'");
    }
  }

  static std::uint64_t to_whole(const std::string& section, const std::string& key, std::string v) {
    v.erase(0, v.find_first_not_of(" \t"));
    v.erase(v.find_last_not_of(" \t") + 1);
    try {
      std::size_t used = 0;
      if (v.empty() || v[0] == '-') {
        throw std::invalid_argument(v);
      }
      const unsigned long long x = std::stoull(v, &used);
      if (used != v.size()) {
        throw std::invalid_argument(v);
      }
      return x;
    } catch (const std::logic_error&) {
      throw ConfigError("[" + section + "] " + key + ": expected a nonnegative integer, got '" + v + "'");
    }
  }

  std::string text_;
  std::filesystem::path dir_;
  boost::property_tree::ptree tree_;
};

}  // namespace sirld::cli
