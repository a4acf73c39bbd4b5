#include "ewflow/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ewflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const char c = k[i];
    if (c == '.' && i > 0 && k[i - 1] == '.') return false;
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

std::string where(const std::string& source, int line) {
  return line > 0 ? source + ":" + std::to_string(line) : source;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& key, const std::string& what)
    : std::runtime_error(where(source, line) + ": " + what), line_(line), key_(key) {}

Config Config::parse(std::istream& is, const std::string& source) {
  Config c;
  c.source_ = source;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(source, lineno, key, "invalid key '" + key + "'");
    if (c.entries_.count(key))
      throw ConfigError(source, lineno, key,
                        "duplicate key '" + key + "' (first set on line " + std::to_string(c.entries_[key].line) + ")");
    c.entries_[key] = Entry{value, lineno};
  }
  return c;
}

Config Config::parse_string(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  return parse(is, source);
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path, 0, "", "cannot open config file");
  return parse(f, path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError(source_, 0, key, "invalid key '" + key + "'");
  auto it = entries_.find(key);
  if (it == entries_.end())
    entries_[key] = Entry{value, 0};
  else
    it->second.value = value;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

void Config::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(source_, line_of(key), key, what);
}

int Config::line_of(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

std::string Config::get_string(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "missing required key '" + key + "'");
  return it->second.value;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(key, "key '" + key + "' expects a number, got '" + v + "'");
}

long Config::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(key, "key '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(key, "key '" + key + "' expects a nonnegative integer, got '" + v + "'");
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(key, "key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  std::stringstream ss(get_string(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(key, "key '" + key + "' expects a comma-separated list of numbers, got '" + item + "'");
    }
  }
  if (out.empty()) fail(key, "key '" + key + "' has an empty list");
  return out;
}

std::vector<int> Config::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (double d : get_doubles(key, {})) {
    if (d != static_cast<int>(d)) fail(key, "key '" + key + "' expects integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

void Config::require_known(const std::set<std::string>& known) const {
  std::vector<std::pair<int, std::string>> byline;
  for (const auto& [k, e] : entries_)
    if (!known.count(k)) byline.emplace_back(e.line, k);
  if (byline.empty()) return;
  std::sort(byline.begin(), byline.end());
  fail(byline.front().second, "unknown key '" + byline.front().second + "'");
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
  return out;
}

}  // namespace ewflow
