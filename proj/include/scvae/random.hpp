#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scvae {

using RandomStream = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Seed for a named sub-stream ("split", "init", "eps", "bootstrap", "sim", ...)
/// of a master seed. Distinct names or indices give unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                 std::uint64_t index = 0) {
  std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a(name));
  return detail::splitmix64(h ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline RandomStream make_stream(std::uint64_t master, std::string_view name,
                                std::uint64_t index = 0) {
  return RandomStream(derive_seed(master, name, index));
}

inline double standard_normal(RandomStream& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Uniform on the open interval (0, 1).
inline double open_uniform(RandomStream& rng) {
  for (;;) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u > 0.0) return u;
  }
}

inline double standard_exponential(RandomStream& rng) {
  return std::exponential_distribution<double>(1.0)(rng);
}

}  // namespace scvae
