// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_IO_HASH_HPP
#define FLOWPLAN_IO_HASH_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace flowplan {

/// FNV-1a 64-bit content hash. Used for manifest digests and determinism
/// checks; not cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t value);

/// Hashes a whole file; throws std::runtime_error with the path on I/O failure.
std::uint64_t hash_file(const std::string& path);

}  // namespace flowplan

#endif  // FLOWPLAN_IO_HASH_HPP
