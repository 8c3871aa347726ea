// bytes.hpp: little-endian packing for the two binary file formats.
// a ByteReader checks bounds on every read; writers append to a byte vector.
#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "rockgpt/common.hpp"

namespace rockgpt {

inline void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const uint8_t* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  put_bytes(out, b, 4);
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  put_bytes(out, b, 8);
}

inline void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  const uint8_t* p = nullptr;
  size_t n = 0;
  size_t at = 0;
  std::string what;  // names the file kind in error messages

  ByteReader(const std::vector<uint8_t>& buf, std::string kind)
      : p(buf.data()), n(buf.size()), what(std::move(kind)) {}
  ByteReader(const uint8_t* buf, size_t len, std::string kind)
      : p(buf), n(len), what(std::move(kind)) {}

  void need(size_t k) const {
    if (at + k > n) throw IoError(what + ": truncated file");
  }
  void raw(void* dst, size_t k) {
    need(k);
    std::memcpy(dst, p + at, k);
    at += k;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[at + i]) << (8 * i);
    at += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[at + i]) << (8 * i);
    at += 8;
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  size_t remaining() const { return n - at; }
};

// fnv-1a, 64-bit: the checksum at the tail of checkpoint files
inline uint64_t fnv1a64(const uint8_t* p, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<uint8_t> read_file_bytes(const std::string& path, const std::string& kind);
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace rockgpt
