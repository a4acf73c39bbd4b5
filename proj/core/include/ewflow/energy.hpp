#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ewflow/gmm.hpp"
#include "ewflow/grid.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

enum class EnergyKind { Linear, Quadratic, Tabulated, Classifier };

std::string to_string(EnergyKind kind);

// Energy function E(x). Classifier energies wrap a base energy E_b >= 0 and
// define p(c = 1 | x) = clamp(exp(-E_b(x)), 1e-12, 1), E = -log p(c = 1 | x).
class Energy {
 public:
  // E(x) = a . x + offset
  static Energy linear(Vec a, double offset = 0.0);
  // E(x) = 1/2 (x - c)^T A (x - c) + offset
  static Energy quadratic(Mat A, Vec center, double offset = 0.0);
  // Piecewise-constant lookup of a grid of energy values; outside the grid
  // the nearest border cell is used.
  static Energy tabulated(DensityGrid values, double offset = 0.0);
  static Energy classifier(const Energy& base);

  EnergyKind kind() const { return kind_; }
  bool is_classifier() const { return kind_ == EnergyKind::Classifier; }
  int dim() const;

  double operator()(const Vec& x) const;
  // p(c = 1 | x) for classifier energies; throws otherwise.
  double class_probability(const Vec& x) const;

  // E + c.
  Energy shifted(double c) const;
  // E <- E - min over the grid's cell centres.
  Energy shift_to_min(const std::vector<GridAxis>& axes) const;

  const Vec& linear_coeffs() const { return a_; }
  const Mat& quadratic_matrix() const { return A_; }
  const Vec& center() const { return center_; }
  double offset() const { return offset_; }
  const Energy* base() const { return base_.get(); }

  std::string describe() const;

 private:
  EnergyKind kind_ = EnergyKind::Linear;
  Vec a_;
  Mat A_;
  Vec center_;
  double offset_ = 0.0;
  std::shared_ptr<const DensityGrid> table_;
  std::shared_ptr<const Energy> base_;
};

struct EnergySpec {
  Energy energy;
  double beta = 1.0;
};

inline constexpr double kMinClassProbability = 1e-12;

// Z = E_{x0 ~ p0}[exp(-beta E(x0))] in closed form for linear and quadratic
// energies against a Gaussian mixture. Returns nullopt for the other kinds.
// Throws std::domain_error when the integral diverges.
std::optional<double> normalization_constant_closed_form(const GaussianMixture& p0, const Energy& energy,
                                                         double beta);

// The exponentially tilted mixture p0 exp(-beta E) / Z when it stays a
// diagonal Gaussian mixture (linear energy, or diagonal quadratic energy).
std::optional<GaussianMixture> tilted_mixture(const GaussianMixture& p0, const Energy& energy, double beta);

}  // namespace ewflow
