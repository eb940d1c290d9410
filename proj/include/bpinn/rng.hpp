#pragma once

#include <cstdint>
#include <random>

namespace bpinn {

// Stateless 64-bit mixer used for deriving independent stream seeds from a
// master seed plus a path of indices (cell, mode, replicate, ...).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x9e3779b97f4a7c15ULL));
  return s;
}

// Thin wrapper so every stochastic routine takes the same engine type.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unif_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unif_(engine_); }
  double normal() { return norm_(engine_); }
  double normal(double mean, double sd) { return mean + sd * norm_(engine_); }
  bool bernoulli(double p) { return unif_(engine_) < p; }
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace bpinn
