#pragma once

#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stcrank {

/// Key/value config tree read from a TOML-style file:
///
///   [section]            # dotted headers such as [arm.msc_on] are allowed
///   key = value          # strings may be quoted, lists written as [1, 2, 3]
///
/// Keys are addressed as "section/key". Missing keys fall back to the
/// supplied default; malformed values raise ConfigError naming the key.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  bool has_section(const std::string& section) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<long long> get_ints(const std::string& key, std::vector<long long> fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       std::vector<std::string> fallback) const;

  /// Section names beginning with `prefix.`, with the prefix stripped,
  /// in file order.
  std::vector<std::string> subsections(const std::string& prefix) const;

  /// A copy of this config in which every key of `overlay` replaces ours.
  Config merged(const Config& overlay) const;

  /// Canonical text form (sections and keys in file order).
  std::string dump() const;

 private:
  std::optional<std::string> raw(const std::string& key) const;

  boost::property_tree::ptree tree_;
};

}  // namespace stcrank
