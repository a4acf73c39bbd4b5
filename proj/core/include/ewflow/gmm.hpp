#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ewflow/rng.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

class PathSchedule;

struct GaussianComponent {
  double weight = 1.0;
  Vec mean;
  Vec var;  // diagonal covariance
};

// Mixture of diagonal-covariance Gaussians. Doubles as its own marginal under
// a Gaussian probability path, since N(m, v) pushed through
// x = mu*x0 + sigma*eps stays Gaussian.
class GaussianMixture {
 public:
  GaussianMixture() = default;
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  static GaussianMixture standard_normal(int dim);

  int dim() const { return dim_; }
  const std::vector<GaussianComponent>& components() const { return components_; }

  double density(const Vec& x) const;
  double log_density(const Vec& x) const;
  // Analytic gradient of log density.
  Vec score(const Vec& x) const;
  // Per-component posterior responsibilities at x.
  Vec responsibilities(const Vec& x) const;

  PointSet sample(Rng& rng, std::size_t n) const;
  // Same as sample() but also reports the component index of each draw.
  PointSet sample(Rng& rng, std::size_t n, std::vector<int>& labels) const;

  // Marginal p_t of the path started from this mixture.
  GaussianMixture marginal(const PathSchedule& sched, double t) const;
  // E[x0 | x_t = x] under p_{0t}, closed form.
  Vec posterior_mean(const PathSchedule& sched, double t, const Vec& x) const;

  Vec mean() const;
  Vec variance() const;  // per-coordinate

  std::string to_json() const;
  static GaussianMixture from_json(const std::string& text);

 private:
  void validate() const;

  int dim_ = 0;
  std::vector<GaussianComponent> components_;
};

}  // namespace ewflow
