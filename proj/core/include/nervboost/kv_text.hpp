#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nervboost {

/// Line-oriented `key=value` text. Blank lines and lines starting with '#' are
/// ignored; keys and values are trimmed. Later duplicates win.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::string& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, double value);
  void set(const std::string& key, int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<int64_t>(value)); }
  void set(const std::string& key, const std::vector<int>& values);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  std::vector<int> get_int_list(const std::string& key) const;

  /// Sorted `key=value\n` lines.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Round-trip exact decimal rendering of a double.
std::string format_double(double value);

/// Parses the whole of `text` as a double, subnormals included. Throws std::invalid_argument.
double parse_double(const std::string& text);

std::vector<int> parse_int_list(std::string_view text);

/// 64-bit FNV-1a.
uint64_t fnv1a64(std::string_view bytes);

}  // namespace nervboost
