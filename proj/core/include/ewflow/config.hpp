#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ewflow {

// Raised for malformed config text or values; line is 0 when the problem is
// not tied to a line (for example a missing required key).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& what);
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

// Flat "dotted.key = value" text. '#' starts a comment; blank lines are
// ignored; keys may appear once.
class Config {
 public:
  static Config parse(std::istream& is, const std::string& source = "<config>");
  static Config parse_string(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated numbers.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  // Throws for the first key (in file order) outside `known`.
  void require_known(const std::set<std::string>& known) const;
  int line_of(const std::string& key) const;
  const std::string& source() const { return source_; }

  // Canonical text: sorted "key = value" lines.
  std::string to_text() const;

 private:
  struct Entry {
    std::string value;
    int line;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string source_ = "<config>";
  std::map<std::string, Entry> entries_;
};

}  // namespace ewflow
