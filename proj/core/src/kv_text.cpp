#include "nervboost/kv_text.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nervboost/errors.hpp"

namespace nervboost {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    auto line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                        std::string(line) + "'");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    kv.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void KeyValues::set(const std::string& key, double value) { values_[key] = format_double(value); }

void KeyValues::set(const std::string& key, int64_t value) { values_[key] = std::to_string(value); }

void KeyValues::set(const std::string& key, const std::vector<int>& values) {
  std::string joined;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) joined += ',';
    joined += std::to_string(values[i]);
  }
  values_[key] = joined;
}

std::string KeyValues::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key) const {
  const auto text = get_string(key);
  try {
    return parse_double(text);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + text + "'");
  }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  return contains(key) ? get_double(key) : fallback;
}

int64_t KeyValues::get_int(const std::string& key) const {
  const auto text = get_string(key);
  int64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

int64_t KeyValues::get_int(const std::string& key, int64_t fallback) const {
  return contains(key) ? get_int(key) : fallback;
}

std::vector<int> KeyValues::get_int_list(const std::string& key) const {
  return parse_int_list(get_string(key));
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

double parse_double(const std::string& text) {
  // strtod flags subnormals with ERANGE but still returns them, so errno is ignored.
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || std::isspace(static_cast<unsigned char>(text[0])) || end != text.c_str() + text.size()) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  return v;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  while (!text.empty()) {
    const auto sep = text.find_first_of(", ");
    auto item = trim(text.substr(0, sep));
    text = sep == std::string_view::npos ? std::string_view{} : text.substr(sep + 1);
    if (item.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError("expected an integer list, got '" + std::string(item) + "'");
    }
    out.push_back(v);
  }
  return out;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace nervboost
