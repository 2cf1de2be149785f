#ifndef HYMLAB_HASH_HPP
#define HYMLAB_HASH_HPP

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace hymlab {

/// 64-bit FNV-1a; used for domain, config and field content hashes.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hymlab

#endif  // HYMLAB_HASH_HPP
