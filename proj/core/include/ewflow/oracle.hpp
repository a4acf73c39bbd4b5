#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "ewflow/energy.hpp"
#include "ewflow/gmm.hpp"
#include "ewflow/grid.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

// Result of pushing weighted source cells through the path kernel onto a
// target grid:
//   log_mass(x) = log sum_j N(x; mu x0_j, sigma^2 I) w_j
//   mean(x)     = sum_j N(x; mu x0_j, sigma^2 I) w_j x0_j / exp(log_mass(x))
struct KernelTransform {
  std::vector<GridAxis> axes;
  Vec log_mass;
  PointSet mean;
};

// Separable log-domain evaluation of the kernel sums above. In 2-D this runs
// one pass over the source x axis and then one over the source y axis, so the
// cost is O(n^3) rather than O(n^4). With normalize_kernel the discrete kernel
// is rescaled per source cell to sum to one over each target axis.
KernelTransform kernel_transform(const std::vector<GridAxis>& source_axes, const Vec& log_weights, double mu,
                                 double sigma, const std::vector<GridAxis>& target_axes,
                                 bool normalize_kernel = false);

// log N(target_i; mu * source_j, sigma^2) as a target-by-source matrix; with
// normalize each column is rescaled so that sum_i K_ij * h_target = 1.
Mat path_log_kernel_1d(const GridAxis& target, const GridAxis& source, double mu, double sigma, bool normalize);

// Guided density, velocity and score of q_t on a target grid.
struct GuidedField {
  std::vector<GridAxis> axes;
  Vec density;      // q_t at the cell centres
  PointSet velocity;
  PointSet score;
};

// Exact (quadrature) oracle for q(x) ∝ p0(x) exp(-beta E(x)) and its path q_t.
// p0 is materialized on a cell-centred grid; posterior expectations over x0
// are midpoint sums over that grid.
class GuidedOracle {
 public:
  GuidedOracle(const GaussianMixture& p0, EnergySpec spec, PathSchedule sched, std::vector<GridAxis> axes);
  GuidedOracle(const DensityGrid& p0, EnergySpec spec, PathSchedule sched);

  // Bounding box of p0 (and of its tilt when available) widened by `pad`
  // maximal component standard deviations.
  static std::vector<GridAxis> default_axes(const GaussianMixture& p0, const EnergySpec& spec,
                                            int resolution = 256, double pad = 4.0);

  int dim() const { return static_cast<int>(axes_.size()); }
  const std::vector<GridAxis>& axes() const { return axes_; }
  const PathSchedule& schedule() const { return sched_; }
  const EnergySpec& spec() const { return spec_; }
  double beta() const { return spec_.beta; }
  const std::optional<GaussianMixture>& base_mixture() const { return gmm_; }

  // Z = E_{p0}[exp(-beta E)] by quadrature over the grid.
  double normalization_constant() const;
  double normalization_constant(double beta) const;

  // E_t(x) = -log E_{p_{0t}(x0|x)}[exp(-beta E(x0))].
  double intermediate_energy(const Vec& x, double t) const;
  double intermediate_energy(const Vec& x, double t, double beta) const;

  Vec guided_velocity(const Vec& x, double t) const;
  Vec guided_score(const Vec& x, double t) const;
  Vec guided_score(const Vec& x, double t, double beta) const;
  Vec marginal_velocity(const Vec& x, double t) const;
  Vec marginal_score(const Vec& x, double t) const;
  // log p_t(x) by quadrature.
  double marginal_log_density(const Vec& x, double t) const;

  // Classifier-derived energies only: p(c|x0) = exp(-E(x0)).
  //   cfg: grad log p_t + beta grad log E[p(c|x0)]
  //   cep: grad log p_t + grad log E[p(c|x0)^beta]
  Vec cfg_score_exact(const Vec& x, double t, double beta) const;
  Vec cep_score_exact(const Vec& x, double t, double beta) const;

  // q_0 = p0 exp(-beta E) / Z on the oracle grid.
  DensityGrid guided_q0_grid() const;
  // q_t = p_t exp(-E_t) / Z, with p_t analytic when p0 is a mixture. Cached per t.
  const DensityGrid& guided_qt_grid(double t) const;
  // q_t as the path-kernel convolution of q_0.
  DensityGrid guided_qt_grid_convolution(double t) const;
  // integral of p_t exp(-E_t) over the grid; equals Z for every t.
  double tilted_marginal_mass(double t) const;

  // Guided q_t, velocity and score on a target grid (defaults to the oracle grid).
  GuidedField guided_field(double t, const std::vector<GridAxis>* target = nullptr, bool normalize_kernel = false,
                           std::optional<double> beta = std::nullopt) const;

  // sum over interior cells of |dq_t/dt + div(q_t u_t)| * cell area, with the
  // time derivative by central differences of width 2 dt and the divergence
  // by second-order central differences on the target grid.
  double continuity_residual(double t, const std::vector<GridAxis>* target = nullptr, double dt = 1e-3) const;

  // Per-cell quantities of the source grid.
  const Vec& log_p0() const { return log_p0_; }
  const Vec& energies() const { return energy_; }
  PointSet cell_centers() const;
  double cell_area() const;

 private:
  void init();
  Vec log_weights(double beta) const;  // log p0 - beta E, per cell
  double posterior_lse(const Vec& x, double t, const Vec& logw, Vec* mean) const;

  std::optional<GaussianMixture> gmm_;
  EnergySpec spec_;
  PathSchedule sched_;
  std::vector<GridAxis> axes_;
  PointSet centers_;
  Vec log_p0_;
  Vec energy_;

  struct Cache {
    std::mutex mu;
    std::map<double, DensityGrid> qt;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

// Generic grid continuity residual for a density/velocity pair given as
// functions of (x, t).
double continuity_residual(const std::vector<GridAxis>& axes, double t,
                           const std::function<double(const Vec&, double)>& density,
                           const std::function<Vec(const Vec&, double)>& velocity, double dt = 1e-3);

// Normalization constant: closed form when available, otherwise quadrature over
// the default oracle grid (dimension at most 2).
double normalization_constant(const GaussianMixture& p0, const Energy& energy, double beta, int resolution = 256);

}  // namespace ewflow
