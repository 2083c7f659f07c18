#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace tibbm {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Pure function of (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

/// SplitMix64 finalizer; used to derive stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Key of an independent random stream. Keys form a tree: `child(tag)`
/// yields a statistically independent key for every distinct tag, so a
/// task path such as (master seed, T index, replicate, particle lineage)
/// maps to a unique stream without any shared state.
class StreamKey {
 public:
  constexpr StreamKey() = default;
  constexpr explicit StreamKey(std::uint64_t value) : value_(mix64(value)) {}

  [[nodiscard]] constexpr StreamKey child(std::uint64_t tag) const noexcept {
    StreamKey k;
    k.value_ = mix64(value_ ^ mix64(tag ^ 0x5851f42d4c957f2dULL));
    return k;
  }
  [[nodiscard]] constexpr std::uint64_t value() const noexcept { return value_; }

  friend constexpr bool operator==(StreamKey, StreamKey) = default;

 private:
  std::uint64_t value_ = 0;
};

/// Counter-based engine. The 128-bit Philox counter is laid out as
/// (block lo, block hi, index, purpose): `index` and `purpose` address a
/// sub-stream (for example step k of a particle path, purpose "bridge
/// uniform"), and the block counter walks through that sub-stream. Any
/// draw is therefore reproducible without replaying earlier draws.
///
/// Satisfies UniformRandomBitGenerator with 64-bit output.
class PhiloxEngine {
 public:
  using result_type = std::uint64_t;

  PhiloxEngine(StreamKey key, std::uint32_t index, std::uint32_t purpose) noexcept
      : key_{static_cast<std::uint32_t>(key.value()),
             static_cast<std::uint32_t>(key.value() >> 32)},
        index_(index),
        purpose_(purpose) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (pos_ >= 4) refill();
    const std::uint64_t lo = block_[pos_];
    const std::uint64_t hi = block_[pos_ + 1];
    pos_ += 2;
    return (hi << 32) | lo;
  }

 private:
  void refill() noexcept {
    block_ = philox4x32_10({static_cast<std::uint32_t>(block_counter_),
                            static_cast<std::uint32_t>(block_counter_ >> 32), index_, purpose_},
                           key_);
    ++block_counter_;
    pos_ = 0;
  }

  PhiloxKey key_;
  std::uint32_t index_;
  std::uint32_t purpose_;
  std::uint64_t block_counter_ = 0;
  PhiloxCounter block_{};
  unsigned pos_ = 4;
};

/// Uniform in the open interval (0, 1).
inline double uniform_open(PhiloxEngine& eng) noexcept {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(PhiloxEngine& eng);
double standard_exponential(PhiloxEngine& eng);

/// Convenience: one standard normal from a fresh sub-stream.
inline double normal_at(StreamKey key, std::uint32_t index, std::uint32_t purpose) {
  PhiloxEngine eng(key, index, purpose);
  return standard_normal(eng);
}

inline double uniform_at(StreamKey key, std::uint32_t index, std::uint32_t purpose) {
  PhiloxEngine eng(key, index, purpose);
  return uniform_open(eng);
}

}  // namespace tibbm
