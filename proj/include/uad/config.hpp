#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace uad {

/// Flat `key = value` text file. '#' starts a comment; blank lines are
/// ignored; duplicate keys are errors. Entries keep file order.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueFile load(const std::string& path);

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(std::initializer_list<std::string_view> known) const;

  bool has(std::string_view key) const;
  std::string get(std::string_view key, const std::string& fallback) const;
  std::string require(std::string_view key) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<std::size_t> get_sizes(std::string_view key, std::vector<std::size_t> fallback) const;
  std::vector<double> get_doubles(std::string_view key, std::vector<double> fallback) const;

  void set(std::string key, std::string value);
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string dump() const;

 private:
  const std::string* find(std::string_view key) const;

  std::string origin_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

template <class Seq>
std::string join(const Seq& values, const char* sep = ",") {
  std::string out;
  bool first = true;
  for (const auto& v : values) {
    if (!first) out += sep;
    first = false;
    if constexpr (std::is_convertible_v<decltype(v), std::string>) {
      out += v;
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

/// Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

}  // namespace uad
