#pragma once

// Counter-based random streams (Philox-4x32-10).
//
// A stream is keyed by a 64-bit seed; its 64-bit stream id occupies the high
// half of the 128-bit counter, so streams with different ids never overlap and
// can be created and consumed in any order.

#include <array>
#include <cstddef>
#include <cstdint>

namespace shadowflow {

/// One Philox-4x32 block with 10 rounds.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1), 53 random bits.
  double uniform();
  /// Standard normal by inverse CDF of uniform().
  double normal();
  /// Uniform on {0, ..., n-1}; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// A new stream derived from this one's (seed, stream id) and a child index.
  /// Independent of how far this stream has advanced.
  RngStream split(std::uint64_t child) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t blocks_used() const { return block_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;  // 32-bit words left in buffer_
};

RngStream make_rng(std::uint64_t seed, std::uint64_t stream_id);

/// SplitMix64 finalizer, used to derive child stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace shadowflow
