#include "ewflow/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ewflow/rng.hpp"

namespace ewflow {

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::EulerOde: return "euler";
    case SamplerKind::HeunOde: return "heun";
    case SamplerKind::Ancestral: return "ancestral";
  }
  return "?";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "euler" || s == "euler_ode") return SamplerKind::EulerOde;
  if (s == "heun" || s == "heun_ode") return SamplerKind::HeunOde;
  if (s == "ancestral") return SamplerKind::Ancestral;
  throw std::invalid_argument("unknown sampler '" + s + "' (expected euler, heun or ancestral)");
}

namespace {

void validate(const SamplerConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("sampler: steps must be at least 1");
  if (cfg.n < 1) throw std::invalid_argument("sampler: n must be at least 1");
  if (!(cfg.t_min < cfg.t_max)) throw std::invalid_argument("sampler: need t_min < t_max");
}

void check_finite(const PointSet& x, int step) {
  if (!x.allFinite()) throw std::runtime_error("sampler: non-finite state at step " + std::to_string(step));
}

}  // namespace

PointSet initial_noise(const PathSchedule& sched, const SamplerConfig& cfg, int dim) {
  validate(cfg);
  const Rng root(cfg.seed);
  const double s = sched.sigma(cfg.t_max);
  PointSet x(dim, static_cast<Eigen::Index>(cfg.n));
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Rng r = root.split(i);
    x.col(static_cast<Eigen::Index>(i)) = s * r.normal_vec(dim);
  }
  return x;
}

PointSet integrate_ode(const FieldFn& velocity, PointSet x, const SamplerConfig& cfg) {
  validate(cfg);
  const double h = (cfg.t_min - cfg.t_max) / cfg.steps;
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.t_max + k * h;
    const Mat v0 = velocity(x, t);
    if (cfg.kind == SamplerKind::HeunOde) {
      const PointSet xe = x + h * v0;
      const Mat v1 = velocity(xe, t + h);
      x += 0.5 * h * (v0 + v1);
    } else {
      x += h * v0;
    }
    check_finite(x, k + 1);
  }
  return x;
}

PointSet sample_ode(const FieldFn& velocity, const PathSchedule& sched, const SamplerConfig& cfg, int dim) {
  if (cfg.kind == SamplerKind::Ancestral) throw std::invalid_argument("sample_ode: ancestral is not an ODE sampler");
  return integrate_ode(velocity, initial_noise(sched, cfg, dim), cfg);
}

PointSet sample_ancestral(const FieldFn& score, const PathSchedule& sched, const SamplerConfig& cfg, int dim) {
  if (sched.kind() != PathKind::VP) throw std::invalid_argument("sample_ancestral: requires a VP schedule");
  PointSet x = initial_noise(sched, cfg, dim);
  const Rng root(cfg.seed);
  std::vector<Rng> streams;
  streams.reserve(cfg.n);
  // Stream i + n keeps the per-step noise apart from the initial draw.
  for (std::size_t i = 0; i < cfg.n; ++i) streams.push_back(root.split(cfg.n + i));

  const double h = (cfg.t_max - cfg.t_min) / cfg.steps;
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.t_max - k * h;
    const double s = k + 1 == cfg.steps ? cfg.t_min : t - h;
    const double mu_t = sched.mu(t);
    const double mu_s = sched.mu(s);
    const double sig_t2 = sched.sigma(t) * sched.sigma(t);
    const double sig_s2 = sched.sigma(s) * sched.sigma(s);
    const double a = mu_t / mu_s;
    const double v = std::max(sig_t2 - a * a * sig_s2, 0.0);
    const Mat sc = score(x, t);
    const PointSet x0_hat = (x + sig_t2 * sc) / mu_t;
    PointSet mean = (a * sig_s2 / sig_t2) * x + (mu_s * v / sig_t2) * x0_hat;
    if (k + 1 < cfg.steps) {
      const double sd = std::sqrt(v);
      for (std::size_t i = 0; i < cfg.n; ++i)
        mean.col(static_cast<Eigen::Index>(i)) += sd * streams[i].normal_vec(dim);
    }
    x = std::move(mean);
    check_finite(x, k + 1);
  }
  return x;
}

PointSet sample_model(const FieldModel& model, const SamplerConfig& cfg) {
  const int dim = model.net->spec().x_dim;
  if (cfg.kind == SamplerKind::Ancestral)
    return sample_ancestral([&](const PointSet& x, double t) { return model.score(x, t); }, model.sched, cfg, dim);
  return sample_ode([&](const PointSet& x, double t) { return model.velocity(x, t); }, model.sched, cfg, dim);
}

PointSet sample_composed(const FieldModel& uncond, const FieldModel& cond, double beta, const SamplerConfig& cfg) {
  const int dim = uncond.net->spec().x_dim;
  const PathSchedule& sched = uncond.sched;
  auto score = [&](const PointSet& x, double t) -> Mat { return cfg_compose(uncond.score(x, t), cond.score(x, t), beta); };
  if (cfg.kind == SamplerKind::Ancestral) return sample_ancestral(score, sched, cfg, dim);
  return sample_ode([&](const PointSet& x, double t) { return velocity_from_score(sched, x, score(x, t), t); }, sched, cfg,
                    dim);
}

Vec cfg_compose(const Vec& score_uncond, const Vec& score_cond, double beta) {
  if (score_uncond.size() != score_cond.size()) throw std::invalid_argument("cfg_compose: shape mismatch");
  return (1.0 - beta) * score_uncond + beta * score_cond;
}

Mat cfg_compose(const Mat& score_uncond, const Mat& score_cond, double beta) {
  if (score_uncond.rows() != score_cond.rows() || score_uncond.cols() != score_cond.cols())
    throw std::invalid_argument("cfg_compose: shape mismatch");
  return (1.0 - beta) * score_uncond + beta * score_cond;
}

void write_samples_csv(std::ostream& os, const PointSet& pts, const std::string& metadata) {
  os << "# " << metadata << '\n';
  for (Eigen::Index r = 0; r < pts.rows(); ++r) os << (r ? "," : "") << "x" << r;
  os << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      std::snprintf(buf, sizeof buf, "%.9g", pts(r, i));
      os << (r ? "," : "") << buf;
    }
    os << '\n';
  }
}

PointSet read_samples_csv(std::istream& is) {
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("read_samples_csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return PointSet();
  PointSet p(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rows[i].size(); ++r) p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = rows[i][r];
  return p;
}

}  // namespace ewflow
