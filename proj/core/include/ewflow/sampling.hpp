#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>

#include "ewflow/field.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

enum class SamplerKind { EulerOde, HeunOde, Ancestral };

std::string to_string(SamplerKind k);
SamplerKind sampler_kind_from_string(const std::string& s);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::HeunOde;
  int steps = 15;
  double t_min = kTimeEps;
  double t_max = 1.0 - kTimeEps;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
};

// Batched field evaluation: x is dim x n, result likewise.
using FieldFn = std::function<Mat(const PointSet& x, double t)>;

// Initial draws x ~ N(0, sigma(t_max)^2 I), one independent stream per particle.
PointSet initial_noise(const PathSchedule& sched, const SamplerConfig& cfg, int dim);

// Integrates dx/dt = velocity(x, t) from t_max down to t_min on a uniform grid
// (Euler or Heun according to cfg.kind).
PointSet sample_ode(const FieldFn& velocity, const PathSchedule& sched, const SamplerConfig& cfg, int dim);
PointSet integrate_ode(const FieldFn& velocity, PointSet x, const SamplerConfig& cfg);

// DDPM-style reverse chain for a score field on a VP path. Between grid times
// s < t with a = mu_t / mu_s and v = sigma_t^2 - a^2 sigma_s^2:
//   x0_hat   = (x_t + sigma_t^2 score) / mu_t
//   mean     = (a sigma_s^2 / sigma_t^2) x_t + (mu_s v / sigma_t^2) x0_hat
//   variance = v
// i.e. the forward transition variance rather than the smaller posterior
// variance v sigma_s^2 / sigma_t^2, which under-disperses on coarse grids.
// The last step returns the mean without noise.
PointSet sample_ancestral(const FieldFn& score, const PathSchedule& sched, const SamplerConfig& cfg, int dim);

// Dispatches on cfg.kind, converting the model's output as needed.
PointSet sample_model(const FieldModel& model, const SamplerConfig& cfg);

Vec cfg_compose(const Vec& score_uncond, const Vec& score_cond, double beta);
Mat cfg_compose(const Mat& score_uncond, const Mat& score_cond, double beta);

// Samples the score composition s_u + beta (s_c - s_u) of two models that
// share a network and path (classifier-free guidance).
PointSet sample_composed(const FieldModel& uncond, const FieldModel& cond, double beta, const SamplerConfig& cfg);

// One row per point, preceded by a '#' metadata line.
void write_samples_csv(std::ostream& os, const PointSet& pts, const std::string& metadata);
PointSet read_samples_csv(std::istream& is);

}  // namespace ewflow
