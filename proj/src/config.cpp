#include "stcrank/config.hpp"

#include "stcrank/error.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace stcrank {

namespace pt = boost::property_tree;

namespace {

std::string strip_value(std::string v) {
  // Inline comments are only recognised outside quotes.
  bool quoted = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '"') quoted = !quoted;
    if (!quoted && v[i] == '#') {
      v.resize(i);
      break;
    }
  }
  boost::algorithm::trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_list(const std::string& key, std::string v) {
  boost::algorithm::trim(v);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  else if (!v.empty() && (v.front() == '[' || v.back() == ']'))
    throw ConfigError("unbalanced list brackets for key '" + key + "'");
  std::vector<std::string> out;
  if (boost::algorithm::trim_copy(v).empty()) return out;
  boost::algorithm::split(out, v, boost::is_any_of(","));
  for (auto& s : out) s = strip_value(s);
  return out;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + s + "'");
  }
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError("key '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

pt::ptree::path_type path_of(const std::string& key) {
  // Section names may contain dots, so paths are split on '/' only.
  return pt::ptree::path_type(key, '/');
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return c;
}

std::optional<std::string> Config::raw(const std::string& key) const {
  auto node = tree_.get_optional<std::string>(path_of(key));
  if (!node) return std::nullopt;
  return strip_value(*node);
}

bool Config::has(const std::string& key) const { return raw(key).has_value(); }

bool Config::has_section(const std::string& section) const {
  return tree_.find(section) != tree_.not_found();
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

std::string Config::require_string(const std::string& key) const {
  auto v = raw(key);
  if (!v) throw ConfigError("missing required key '" + key + "'");
  return *v;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  return v ? parse_double(key, *v) : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = raw(key);
  return v ? parse_int(key, *v) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  auto s = boost::algorithm::to_lower_copy(*v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + *v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        std::vector<double> fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(key, *v)) out.push_back(parse_double(key, s));
  return out;
}

std::vector<long long> Config::get_ints(const std::string& key,
                                        std::vector<long long> fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::vector<long long> out;
  for (const auto& s : split_list(key, *v)) out.push_back(parse_int(key, s));
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             std::vector<std::string> fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  return split_list(key, *v);
}

std::vector<std::string> Config::subsections(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string p = prefix + ".";
  for (const auto& [name, child] : tree_) {
    if (name.rfind(p, 0) == 0 && name.size() > p.size()) out.push_back(name.substr(p.size()));
  }
  return out;
}

Config Config::merged(const Config& overlay) const {
  Config c = *this;
  for (const auto& [section, child] : overlay.tree_) {
    auto it = c.tree_.find(section);
    if (it == c.tree_.not_found()) {
      c.tree_.push_back({section, child});
      continue;
    }
    auto& dst = c.tree_.to_iterator(it)->second;
    for (const auto& [key, value] : child) {
      auto kit = dst.find(key);
      if (kit == dst.not_found()) dst.push_back({key, value});
      else dst.to_iterator(kit)->second = value;
    }
  }
  return c;
}

std::string Config::dump() const {
  std::ostringstream out;
  pt::ini_parser::write_ini(out, tree_);
  return out.str();
}

}  // namespace stcrank
