#include "ewflow/paths.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ewflow {

namespace fault {
namespace {
bool g_flip = false;
}
void set_cond_score_sign_flip(bool on) { g_flip = on; }
bool cond_score_sign_flipped() { return g_flip; }
}  // namespace fault

namespace {
double score_sign() { return fault::cond_score_sign_flipped() ? 1.0 : -1.0; }
}  // namespace

std::string to_string(PathKind kind) { return kind == PathKind::VP ? "vp" : "ot"; }

PathKind path_kind_from_string(const std::string& name) {
  if (name == "vp") return PathKind::VP;
  if (name == "ot") return PathKind::OT;
  throw std::invalid_argument("unknown path kind '" + name + "' (expected vp or ot)");
}

double clamp_time(double t) { return std::clamp(t, kTimeEps, 1.0 - kTimeEps); }

PathSchedule::PathSchedule(PathParams params) : p_(params) {
  if (p_.kind == PathKind::OT && !(p_.sigma_min > 0.0 && p_.sigma_min < 1.0))
    throw std::invalid_argument("path.sigma_min must lie in (0, 1)");
  if (p_.kind == PathKind::VP && !(p_.beta_min > 0.0 && p_.beta_max >= p_.beta_min))
    throw std::invalid_argument("path.beta_min/beta_max must satisfy 0 < beta_min <= beta_max");
}

PathSchedule PathSchedule::ot(double sigma_min) {
  return PathSchedule(PathParams{PathKind::OT, sigma_min, 0.1, 20.0});
}

PathSchedule PathSchedule::vp(double beta_min, double beta_max) {
  return PathSchedule(PathParams{PathKind::VP, 0.0054, beta_min, beta_max});
}

namespace {
double vp_log_mu(const PathParams& p, double t) {
  return -0.5 * (p.beta_min * t + 0.5 * (p.beta_max - p.beta_min) * t * t);
}
double vp_beta(const PathParams& p, double t) { return p.beta_min + (p.beta_max - p.beta_min) * t; }
}  // namespace

double PathSchedule::mu(double t) const {
  if (p_.kind == PathKind::OT) return 1.0 - t;
  return std::exp(vp_log_mu(p_, t));
}

double PathSchedule::sigma(double t) const {
  if (p_.kind == PathKind::OT) return p_.sigma_min + (1.0 - p_.sigma_min) * t;
  // 1 - mu^2 = -expm1(2 log mu), accurate near t = 0.
  return std::sqrt(-std::expm1(2.0 * vp_log_mu(p_, t)));
}

double PathSchedule::dmu(double t) const {
  if (p_.kind == PathKind::OT) return -1.0;
  return -0.5 * vp_beta(p_, t) * mu(t);
}

double PathSchedule::dsigma(double t) const {
  if (p_.kind == PathKind::OT) return 1.0 - p_.sigma_min;
  const double m = mu(t);
  return -m * dmu(t) / sigma(t);
}

double PathSchedule::drift_f(double t) const { return dmu(t) / mu(t); }

double PathSchedule::drift_g2(double t) const {
  const double m = mu(t);
  const double s = sigma(t);
  const double g2 = (dmu(t) * s - m * dsigma(t)) * s / m;
  return g2;
}

AffineCoeffs PathSchedule::cond_velocity_coeffs(double t) const {
  const double m = mu(t);
  if (m == 0.0) throw std::domain_error("cond_velocity: mu(t) = 0");
  const double s2 = sigma(t) * sigma(t);
  const double f = drift_f(t);
  const double g2 = drift_g2(t);
  // u = f x + g2 * (-(x - mu x0) / sigma^2)
  const double sg = score_sign();
  return {f + sg * g2 / s2, -sg * g2 * m / s2};
}

Perturbed perturb(const PathSchedule& sched, const Vec& x0, TimePoint t, Rng& rng) {
  Vec eps = rng.normal_vec(x0.size());
  Vec xt = perturb_with(sched, x0, t, eps);
  return {std::move(xt), std::move(eps)};
}

Vec perturb_with(const PathSchedule& sched, const Vec& x0, TimePoint t, const Vec& eps) {
  return sched.mu(t) * x0 + sched.sigma(t) * eps;
}

Vec cond_score(const PathSchedule& sched, const Vec& x, const Vec& x0, TimePoint t) {
  const double s = sched.sigma(t);
  if (s == 0.0) throw std::domain_error("cond_score: sigma(t) = 0");
  return score_sign() * (x - sched.mu(t) * x0) / (s * s);
}

Vec cond_velocity(const PathSchedule& sched, const Vec& x, const Vec& x0, TimePoint t) {
  const AffineCoeffs c = sched.cond_velocity_coeffs(t);
  return c.a * x + c.b * x0;
}

namespace {
void check_g2(double g2, double t) {
  if (!std::isfinite(g2) || std::abs(g2) < 1e-300) {
    std::ostringstream msg;
    msg << "score_from_velocity: degenerate coefficient at t=" << t;
    throw std::domain_error(msg.str());
  }
}
}  // namespace

Vec velocity_from_score(const PathSchedule& sched, const Vec& x, const Vec& score, TimePoint t) {
  return sched.drift_f(t) * x + sched.drift_g2(t) * score;
}

Vec score_from_velocity(const PathSchedule& sched, const Vec& x, const Vec& velocity, TimePoint t) {
  const double g2 = sched.drift_g2(t);
  check_g2(g2, t);
  return (velocity - sched.drift_f(t) * x) / g2;
}

Mat velocity_from_score(const PathSchedule& sched, const Mat& x, const Mat& score, double t) {
  const double tc = clamp_time(t);
  return sched.drift_f(tc) * x + sched.drift_g2(tc) * score;
}

Mat score_from_velocity(const PathSchedule& sched, const Mat& x, const Mat& velocity, double t) {
  const double tc = clamp_time(t);
  const double g2 = sched.drift_g2(tc);
  check_g2(g2, tc);
  return (velocity - sched.drift_f(tc) * x) / g2;
}

}  // namespace ewflow
