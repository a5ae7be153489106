#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace nmt {

// FNV-1a 64-bit, used for artifact content hashes in pipeline manifests.
inline uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_file_hex(const std::string& path);

}  // namespace nmt
