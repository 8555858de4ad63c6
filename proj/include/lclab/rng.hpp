#pragma once

#include <cstdint>

namespace lclab {

// splitmix64 step: advances `state` by the golden-ratio increment and returns
// the finalized output. Used to seed Rng and to derive independent streams.
std::uint64_t splitmix64(std::uint64_t& state);

// Seed for stream `stream` of a master seed. Pure function of both inputs.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// xoshiro256** with its 256-bit state filled by four splitmix64 outputs.
// Everything random in the project (toy weights, samples, prune masks, Monte
// Carlo draws) flows through this class; see docs/rng.md for the exact
// algorithms, which fix every output bit for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n) by rejection; n > 0.
  std::uint64_t uniform_below(std::uint64_t n);
  // Standard normal via Box-Muller; the sine variate is cached for the next call.
  double normal();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lclab

#include <cstddef>
#include <vector>

namespace lclab {

// First k entries of a seeded Fisher-Yates shuffle of 0..n-1 (partial
// shuffle: position i swaps with a uniform pick from [i, n)). k <= n.
std::vector<std::size_t> fisher_yates_prefix(Rng& rng, std::size_t n, std::size_t k);

}  // namespace lclab
