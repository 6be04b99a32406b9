#pragma once

// Counter-based normal variates: Philox4x32-10 feeding Box-Muller.
//
// Every variate is a pure function of (seed, path_index, substream, index), so a
// path can be regenerated anywhere, by any worker, without shared state.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace semigrad::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {
inline constexpr std::uint32_t kMulA = 0xD2511F53u;
inline constexpr std::uint32_t kMulB = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeylA = 0x9E3779B9u;
inline constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}
}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline Counter philox4x32(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += detail::kWeylA;
      key[1] += detail::kWeylB;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo(detail::kMulA, ctr[0], hi0, lo0);
    detail::mulhilo(detail::kMulB, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// Maps 64 random bits to a double in the open interval (0, 1).
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Identifies one independent stream of variates.
struct StreamId {
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  std::uint32_t substream = 0;
};

/// Standard normal pair number `block` of a stream.
inline std::array<double, 2> normal_pair(const StreamId& id, std::uint32_t block) noexcept {
  const Counter ctr{block, static_cast<std::uint32_t>(id.path_index),
                    static_cast<std::uint32_t>(id.path_index >> 32), id.substream};
  const Key key{static_cast<std::uint32_t>(id.seed), static_cast<std::uint32_t>(id.seed >> 32)};
  const Counter r = philox4x32(ctr, key);
  const double u1 = to_open_unit(r[0], r[1]);
  const double u2 = to_open_unit(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Uniform variate in (0, 1) drawn from the high end of a stream's counter space,
/// disjoint from the blocks consumed by `normal_pair` for any realistic path length.
inline double uniform(const StreamId& id, std::uint32_t index) noexcept {
  const Counter ctr{0xFFFFFFFFu - index, static_cast<std::uint32_t>(id.path_index),
                    static_cast<std::uint32_t>(id.path_index >> 32), id.substream};
  const Key key{static_cast<std::uint32_t>(id.seed), static_cast<std::uint32_t>(id.seed >> 32)};
  const Counter r = philox4x32(ctr, key);
  return to_open_unit(r[0], r[1]);
}

}  // namespace semigrad::rng
