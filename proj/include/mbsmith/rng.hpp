#pragma once

#include <array>
#include <cstdint>

namespace mbsmith {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Counter-based stream: the sequence depends only on (seed, stream), so sample
// i of a run draws the same numbers regardless of which thread evaluates it.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream);

    // Uniform double in [0, 1) with 53 random bits.
    double uniform();
    std::array<double, 2> uniform2() { return {uniform(), uniform()}; }
    std::uint64_t next_u64();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

  private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int used_ = 4;
};

}  // namespace mbsmith
