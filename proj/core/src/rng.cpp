#include "mfc/rng.hpp"

#include <cmath>

namespace mfc {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  const std::uint32_t out[4] = {hi1 ^ ctr[1] ^ key[0], lo1,
                                hi0 ^ ctr[3] ^ key[1], lo0};
  ctr[0] = out[0];
  ctr[1] = out[1];
  ctr[2] = out[2];
  ctr[3] = out[3];
}

}  // namespace

std::uint64_t CounterRng::derive_key(std::uint64_t root_seed, StreamRole role,
                                     std::uint64_t scenario,
                                     std::uint64_t particle) {
  std::uint64_t k = splitmix64(root_seed);
  k = splitmix64(k ^ (static_cast<std::uint64_t>(role) * 0xA24BAED4963EE407ull));
  k = splitmix64(k ^ (scenario * 0x9FB21C651E98DF25ull));
  k = splitmix64(k ^ (particle * 0xC2B2AE3D27D4EB4Full));
  return k;
}

void CounterRng::refill() {
  std::uint32_t ctr[4] = {
      static_cast<std::uint32_t>(counter_),
      static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(key_),  // lane tag; constant per stream
      0u,
  };
  std::uint32_t key[2] = {static_cast<std::uint32_t>(key_),
                          static_cast<std::uint32_t>(key_ >> 32)};
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, key);
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  buf_[0] = ctr[0];
  buf_[1] = ctr[1];
  buf_[2] = ctr[2];
  buf_[3] = ctr[3];
  buf_pos_ = 0;
  ++counter_;
}

std::uint64_t CounterRng::next_u64() {
  if (buf_pos_ > 2) refill();
  const std::uint64_t lo = buf_[buf_pos_];
  const std::uint64_t hi = buf_[buf_pos_ + 1];
  buf_pos_ += 2;
  return (hi << 32) | lo;
}

double CounterRng::uniform() {
  // 53-bit mantissa from the top of the word.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  have_cached_normal_ = true;
  return r * std::cos(theta);
}

}  // namespace mfc
