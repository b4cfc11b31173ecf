#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace rrcycle {

std::uint64_t splitmix64(std::uint64_t x);

// Mixes a base seed with a list of stream identifiers (round, prompt index,
// sample index, ...) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> streams);

// Seeded generator whose distributions are implemented here rather than by
// <random>, so every draw is bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  // Uniform integer in [0, n); n > 0.
  std::size_t below(std::size_t n);
  // Draws index i with probability weights[i] / sum(weights).
  std::size_t categorical(const std::vector<double>& weights);
  // First k entries of a Fisher-Yates shuffle of [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace rrcycle
