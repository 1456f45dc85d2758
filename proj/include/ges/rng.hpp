#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ges {

/// Mixes `keys` into `base` with splitmix64 rounds. Used to derive an
/// independent stream per (seed, image, cycle, point, purpose) so results do
/// not depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

/// Deterministic random source. The engine is std::mt19937_64 (bit-exact
/// across standard libraries); the distributions are written here because the
/// std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Uniform in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return p > 0.0 && uniform() < p; }

  /// Box-Muller; consumes two draws per call.
  double normal(double mean, double stddev);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ges
