#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "framecast/tensor.hpp"

namespace framecast {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

// Hashes the raw IEEE-754 bit patterns, so equal digests mean bit-identical values.
inline std::uint64_t fnv1a64(const Tensor& t, std::uint64_t h = kFnvOffset) {
  return fnv1a64(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double), h);
}

std::string digest_hex(std::uint64_t h);

}  // namespace framecast
