#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace skewnet {

/// 64-bit FNV-1a. Used for stable seed derivation, row identities and
/// config hashes; std::hash gives no cross-build stability guarantee.
inline std::uint64_t fnv1a(const void* bytes, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  return fnv1a(s.data(), s.size(), h);
}

/// Child seed for a named stage of a run, so stages never share a stream
/// and adding a stage does not perturb the others.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) noexcept {
  std::uint64_t h = fnv1a(&seed, sizeof seed);
  h = fnv1a(stage, h);
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

/// Seeded random stream owned by a single run or stage.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace skewnet
