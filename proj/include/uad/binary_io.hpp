#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "uad/errors.hpp"

namespace uad::io {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

/// Little-endian byte source; running past the end raises ParseError::Truncated.
class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  const unsigned char* take(std::size_t n, const char* what) {
    if (n > remaining()) {
      throw ParseError(ParseError::Kind::Truncated, std::string("truncated payload while reading ") + what);
    }
    const unsigned char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }
  std::uint32_t u32(const char* what) {
    const auto* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    const auto* p = take(n, what);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::vector<unsigned char>& bytes);
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace uad::io
