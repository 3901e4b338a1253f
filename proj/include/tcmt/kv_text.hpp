#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcmt {

/// Malformed configuration text or an invalid configuration value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered key=value pairs. Blank lines and lines starting with '#' are
/// skipped; whitespace around keys and values is trimmed.
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  static KeyValues parse(const std::string& text, const std::string& source = "<text>");

  const std::string* find(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

double parse_double(const std::string& value, const std::string& key);
std::int64_t parse_int(const std::string& value, const std::string& key);
std::size_t parse_size(const std::string& value, const std::string& key);
bool parse_bool(const std::string& value, const std::string& key);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace tcmt
