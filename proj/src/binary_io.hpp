#pragma once

// Little-endian primitives shared by the MREB and MRBW readers/writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mrb/errors.hpp"

namespace mrb::detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void str(const std::string& s) {
    u32(checked_u32(s.size(), "string length"));
    raw(s.data(), s.size());
  }
  void f32s(const float* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      raw(data, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) f32(data[i]);
    }
  }

  static std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw FormatError(std::string(what) + " does not fit in u32");
    return static_cast<std::uint32_t>(v);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw DataError("write to '" + path + "' failed");
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  static ByteReader open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes), path);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::string& path() const { return path_; }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw TruncatedError("'" + path_ + "' truncated while reading " + what + " at byte " +
                           std::to_string(pos_) + " (need " + std::to_string(n) + ", have " +
                           std::to_string(remaining()) + ")");
    }
  }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string bytes(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::string str(const std::string& what) { return bytes(u32(what + " length"), what); }

  void f32s(float* out, std::size_t n, const std::string& what) {
    if (n > remaining() / sizeof(float)) need(n * sizeof(float), what);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out, bytes_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(u32(what));
    }
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw TrailingDataError("'" + path_ + "' has " + std::to_string(remaining()) +
                              " unexpected trailing bytes");
    }
  }

 private:
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace mrb::detail
