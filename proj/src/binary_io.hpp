#pragma once

// Little helpers for the flat binary artifact formats. Values are written in
// host byte order; the formats are defined as little-endian and we only build
// for little-endian targets.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string_view>

#include "maskbd/common.hpp"

namespace maskbd::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError("cannot open " + path.string() + " for writing");
  }

  void magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }

  template <class T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void matrix(const CMatrix& m) {
    // Column-major, interleaved (re, im).
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(cplx)));
  }

  void finish() {
    out_.flush();
    if (!out_) throw FormatError("write failed");
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw FormatError("cannot open " + path_);
  }

  void expect_magic(std::string_view tag) {
    std::string buf(tag.size(), '\0');
    in_.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in_ || buf != tag) throw FormatError(path_ + ": bad magic, expected " + std::string(tag));
  }

  template <class T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw FormatError(path_ + ": truncated header");
    return value;
  }

  CMatrix matrix(Index rows, Index cols) {
    if (rows < 0 || cols < 0 || rows > (Index{1} << 28) || cols > (Index{1} << 28)) {
      throw FormatError(path_ + ": implausible matrix shape");
    }
    CMatrix m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(cplx)));
    if (!in_) throw FormatError(path_ + ": truncated payload");
    return m;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw FormatError(path_ + ": trailing bytes");
  }

 private:
  std::ifstream in_;
  std::string path_;
};

inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace maskbd::detail
