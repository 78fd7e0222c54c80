#include "uad/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "uad/errors.hpp"

namespace uad {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + body + "'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.find(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.entries_.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValueFile::require_known(std::initializer_list<std::string_view> known) const {
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError(origin_ + ": unknown config key '" + k + "'");
    }
  }
}

const std::string* KeyValueFile::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

bool KeyValueFile::has(std::string_view key) const { return find(key) != nullptr; }

std::string KeyValueFile::get(std::string_view key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

std::string KeyValueFile::require(std::string_view key) const {
  const auto* v = find(key);
  if (!v) throw ConfigError(origin_ + ": missing required key '" + std::string(key) + "'");
  return *v;
}

std::int64_t KeyValueFile::get_int(std::string_view key, std::int64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || p != v->data() + v->size()) {
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' expects an integer, got '" + *v + "'");
  }
  return out;
}

std::uint64_t KeyValueFile::get_uint(std::string_view key, std::uint64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || p != v->data() + v->size()) {
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' expects a non-negative integer, got '" + *v + "'");
  }
  return out;
}

double KeyValueFile::get_double(std::string_view key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' expects a number, got '" + *v + "'");
  }
}

bool KeyValueFile::get_bool(std::string_view key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(origin_ + ": key '" + std::string(key) + "' expects true/false, got '" + *v + "'");
}

std::vector<std::size_t> KeyValueFile::get_sizes(std::string_view key, std::vector<std::size_t> fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  for (const auto& part : split(*v, ',')) {
    std::size_t x = 0;
    const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), x);
    if (part.empty() || ec != std::errc{} || p != part.data() + part.size()) {
      throw ConfigError(origin_ + ": key '" + std::string(key) + "' expects a comma-separated integer list, got '" +
                        *v + "'");
    }
    out.push_back(x);
  }
  return out;
}

std::vector<double> KeyValueFile::get_doubles(std::string_view key, std::vector<double> fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& part : split(*v, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key '" + std::string(key) + "' expects a comma-separated number list, got '" +
                        *v + "'");
    }
  }
  return out;
}

void KeyValueFile::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

std::string KeyValueFile::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace uad
