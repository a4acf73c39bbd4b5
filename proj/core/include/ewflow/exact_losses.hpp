#pragma once

#include <vector>

#include "ewflow/field.hpp"
#include "ewflow/grid.hpp"
#include "ewflow/mlp.hpp"
#include "ewflow/oracle.hpp"
#include "ewflow/training.hpp"

namespace ewflow {

// Fixed quadrature over (x, t) for the exact losses: a midpoint rule in t and
// the cell centres of x_axes in space.
struct ExactQuadrature {
  std::vector<double> t_nodes;
  std::vector<double> t_weights;
  std::vector<GridAxis> x_axes;
  bool normalize_kernel = true;
};

ExactQuadrature make_exact_quadrature(const GuidedOracle& oracle, int time_nodes,
                                      const std::vector<GridAxis>* x_axes = nullptr, bool normalize_kernel = true);

// sum_t w_t sum_x dA q_t(x) || b(x, t) - u_hat_t(x) ||^2, with q_t and u_hat
// from the oracle.
LossResult loss_efm_exact(const Mlp& model, const GuidedOracle& oracle, const ExactQuadrature& quad);
// sum_t w_t sum_x0 dA0 q_0(x0) sum_x dA K_t(x | x0) || b(x, t) - u_{t0}(x | x0) ||^2,
// summed pair by pair.
LossResult loss_cefm_exact(const Mlp& model, const GuidedOracle& oracle, const ExactQuadrature& quad);

// Score analogues with targets grad log q_t and grad log p_{t0}(x | x0).
LossResult loss_ed_exact(const Mlp& model, ScoreParam param, const GuidedOracle& oracle, const ExactQuadrature& quad);
LossResult loss_ced_exact(const Mlp& model, ScoreParam param, const GuidedOracle& oracle, const ExactQuadrature& quad);

// ||a - b|| / ||a||.
double relative_difference(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ewflow
