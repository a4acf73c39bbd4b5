#include "ewflow/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ewflow {

void adam_step(AdamState& s, std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (s.m.empty() && s.v.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size() || s.v.size() != params.size())
    throw std::invalid_argument("adam_step: moment size mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    params[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
  }
}

void soft_update(std::vector<double>& target, const std::vector<double>& online, double lambda) {
  if (target.size() != online.size()) throw std::invalid_argument("soft_update: size mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("soft_update: lambda must lie in [0, 1]");
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = (1.0 - lambda) * target[i] + lambda * online[i];
}

}  // namespace ewflow
