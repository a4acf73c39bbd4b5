#pragma once

#include <string>

#include "ewflow/rng.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

enum class PathKind { VP, OT };

std::string to_string(PathKind kind);
PathKind path_kind_from_string(const std::string& name);

inline constexpr double kTimeEps = 1e-3;

// Clamp into [kTimeEps, 1 - kTimeEps].
double clamp_time(double t);

// Time t in the clamped interior; t = 0 is data and t = 1 is noise.
class TimePoint {
 public:
  explicit TimePoint(double t) : t_(clamp_time(t)) {}
  double value() const { return t_; }
  operator double() const { return t_; }  // NOLINT(google-explicit-constructor)

 private:
  double t_;
};

struct PathParams {
  PathKind kind = PathKind::OT;
  double sigma_min = 0.0054;
  double beta_min = 0.1;
  double beta_max = 20.0;
};

// Affine form of the conditional velocity: u(x | x0) = a * x + b * x0.
struct AffineCoeffs {
  double a;
  double b;
};

// Gaussian probability path p_{t0}(x | x0) = N(mu_t x0, sigma_t^2 I).
//   OT: mu = 1 - t, sigma = sigma_min + (1 - sigma_min) t
//   VP: mu = exp(-1/2 int_0^t beta(s) ds), beta linear in [beta_min, beta_max],
//       sigma = sqrt(1 - mu^2)
class PathSchedule {
 public:
  PathSchedule() = default;
  explicit PathSchedule(PathParams params);
  static PathSchedule ot(double sigma_min = 0.0054);
  static PathSchedule vp(double beta_min = 0.1, double beta_max = 20.0);

  PathKind kind() const { return p_.kind; }
  const PathParams& params() const { return p_; }

  double mu(double t) const;
  double sigma(double t) const;
  double dmu(double t) const;
  double dsigma(double t) const;

  // Drift terms of the probability-flow ODE dx/dt = f x + g2 * score:
  //   f = dmu / mu,  g2 = (dmu sigma - mu dsigma) sigma / mu.
  double drift_f(double t) const;
  double drift_g2(double t) const;

  // u_{t0}(x | x0) = a x + b x0, from cond_score plugged into the
  // velocity/score relation.
  AffineCoeffs cond_velocity_coeffs(double t) const;

 private:
  PathParams p_;
};

struct Perturbed {
  Vec xt;
  Vec eps;
};

Perturbed perturb(const PathSchedule& sched, const Vec& x0, TimePoint t, Rng& rng);
Vec perturb_with(const PathSchedule& sched, const Vec& x0, TimePoint t, const Vec& eps);

// grad_x log p_{t0}(x | x0) = -(x - mu x0) / sigma^2.
Vec cond_score(const PathSchedule& sched, const Vec& x, const Vec& x0, TimePoint t);

// Conditional velocity generating p_{t0}, via the score relation.
Vec cond_velocity(const PathSchedule& sched, const Vec& x, const Vec& x0, TimePoint t);

// Mutually inverse affine maps between marginal score and marginal velocity.
Vec velocity_from_score(const PathSchedule& sched, const Vec& x, const Vec& score, TimePoint t);
Vec score_from_velocity(const PathSchedule& sched, const Vec& x, const Vec& velocity, TimePoint t);

// Column-wise versions, one time per column.
Mat velocity_from_score(const PathSchedule& sched, const Mat& x, const Mat& score, double t);
Mat score_from_velocity(const PathSchedule& sched, const Mat& x, const Mat& velocity, double t);

// Mutation switch used by the self-test: when set, the conditional score (and
// every quantity derived from it) carries the wrong sign.
namespace fault {
void set_cond_score_sign_flip(bool on);
bool cond_score_sign_flipped();
}  // namespace fault

}  // namespace ewflow
