#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <string_view>

#include "rgbdface/error.hpp"

namespace rgbdface {

// 64-bit FNV-1a. Used for dataset digests and checkpoint checksums; not a
// cryptographic hash.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes) {
    for (unsigned char b : bytes) {
      h_ ^= b;
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) {
    update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
  }
  template <typename T>
  void update_pod(const T& v) {
    update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(&v), sizeof(T)));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require<std::runtime_error>(static_cast<bool>(in), "cannot open ", path, " for hashing");
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf),
                                            static_cast<std::size_t>(in.gcount())));
  }
  return h.digest();
}

}  // namespace rgbdface
