#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ghzlab {

/// SplitMix64 finalizer. Used as a stateless counter-based generator where
/// random access into a sequence is needed (basis schedules).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) for element `counter` of the stream `key`.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  const std::uint64_t bits = splitmix64(key ^ splitmix64(counter));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Independent engine for a named sub-stream of a run seed.
inline std::mt19937_64 derive_engine(std::uint64_t seed, std::string_view stream) {
  const std::uint64_t h = fnv1a(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

inline std::uint64_t derive_key(std::uint64_t seed, std::string_view stream) noexcept {
  return splitmix64(seed ^ fnv1a(stream));
}

}  // namespace ghzlab
