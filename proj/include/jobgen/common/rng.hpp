#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace jobgen {

// 64-bit mixing function used to derive independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Derives a named sub-seed ("corpus", "sft", ...) from a parent seed.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view name) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

// Seeded generator. The engine is std::mt19937_64; conversions to doubles and
// bounded integers are done here so results do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  // Uniform integer in [lo, hi].
  int between(int lo, int hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Index drawn proportionally to non-negative weights.
  std::size_t weighted(const std::vector<double>& weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace jobgen
