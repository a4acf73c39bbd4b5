#pragma once

#include <cstddef>
#include <vector>

namespace ewflow {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update of params in place.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads);

// target <- (1 - lambda) target + lambda online.
void soft_update(std::vector<double>& target, const std::vector<double>& online, double lambda);

}  // namespace ewflow
