#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace peanut {

/// Little-endian binary file writer for the project's container formats.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
  }

  void magic(const char m[4]) { out_.write(m, 4); }
  void u8(uint8_t x) { raw(&x, 1); }
  void u16(uint16_t x) { raw(&x, 2); }
  void u32(uint32_t x) { raw(&x, 4); }
  void u64(uint64_t x) { raw(&x, 8); }
  void f32(float x) { raw(&x, 4); }
  void f64(double x) { raw(&x, 8); }
  void bytes(const void* p, size_t n) { raw(p, n); }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failure on close");
  }

 private:
  void raw(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path.string());
  }

  void expect_magic(const char m[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw std::runtime_error(std::string("bad magic, expected ") + std::string(m, 4));
  }
  uint8_t u8() { uint8_t x; raw(&x, 1); return x; }
  uint16_t u16() { uint16_t x; raw(&x, 2); return x; }
  uint32_t u32() { uint32_t x; raw(&x, 4); return x; }
  uint64_t u64() { uint64_t x; raw(&x, 8); return x; }
  float f32() { float x; raw(&x, 4); return x; }
  double f64() { double x; raw(&x, 8); return x; }
  void bytes(void* p, size_t n) { raw(p, n); }

 private:
  void raw(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) throw std::runtime_error("unexpected end of file");
  }
  std::ifstream in_;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failure: " + path.string());
}

/// FNV-1a 64-bit; used for config fingerprints.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace peanut
