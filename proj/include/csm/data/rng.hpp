#pragma once

#include <cstdint>
#include <random>

namespace csm {

/// Seeded pseudorandom stream with cheap derivation of independent substreams.
///
/// Two Rngs built from the same seed produce the same sequence. split(k)
/// derives a new stream from (seed, k) without advancing this one, so each
/// (module, purpose) pair or sampler chain can own its own generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const;

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// +1 or -1 with equal probability.
  double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// splitmix64 finaliser; used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace csm
