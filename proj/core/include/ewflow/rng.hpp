#pragma once

#include <array>
#include <cstdint>

#include "ewflow/types.hpp"

namespace ewflow {

// xoshiro256** seeded through splitmix64. Gaussians use the Box-Muller
// transform with the second variate cached, so a stream is fully determined
// by (seed, number of draws).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  Vec normal_vec(Eigen::Index dim);
  Mat normal_mat(Eigen::Index rows, Eigen::Index cols);

  // Independent child stream keyed by `stream`; does not advance this one.
  [[nodiscard]] Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace ewflow
