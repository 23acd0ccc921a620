#pragma once

#include <cmath>
#include <cstdint>

namespace regrasp {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// Uniform in (0, 1]; safe as a log argument.
inline double u64_to_unit_open(uint64_t v) {
  return (static_cast<double>(v >> 11) + 1.0) * 0x1.0p-53;
}

// Counter-based standard normal: the draw is a pure function of the key, so
// results do not depend on evaluation or thread order.
inline double counter_normal(uint64_t seed, uint64_t candidate, uint64_t pose,
                             uint64_t coord, uint64_t iter) {
  uint64_t key = hash_combine(seed, candidate);
  key = hash_combine(key, pose);
  key = hash_combine(key, coord);
  key = hash_combine(key, iter);
  const double u1 = u64_to_unit_open(splitmix64(key));
  const double u2 = u64_to_unit_open(splitmix64(key ^ 0xd1b54a32d192ed03ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace regrasp
