#include "ewflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ewflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vec axis_centers(const GridAxis& ax) {
  Vec c(ax.n);
  for (int i = 0; i < ax.n; ++i) c[i] = ax.center(i);
  return c;
}

}  // namespace

Mat path_log_kernel_1d(const GridAxis& target, const GridAxis& source, double mu, double sigma, bool normalize) {
  const Vec tx = axis_centers(target);
  const Vec sx = axis_centers(source);
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Mat K(tx.size(), sx.size());
  for (Eigen::Index j = 0; j < sx.size(); ++j)
    K.col(j) = norm - (tx.array() - mu * sx[j]).square() * inv;
  if (normalize) {
    const double log_h = std::log(target.step());
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      const double mx = K.col(j).maxCoeff();
      const double lse = mx + std::log((K.col(j).array() - mx).exp().sum());
      K.col(j).array() -= lse + log_h;
    }
  }
  return K;
}

namespace {

// Row-wise log-sum-exp of logits and softmax-weighted sum of values.
// Rows whose logits are all -inf get log mass -inf and weighted sum 0.
void softmax_rows(const Mat& logits, const Mat& values, Eigen::Ref<Vec> lse, Eigen::Ref<Mat> weighted) {
  Vec mx = logits.rowwise().maxCoeff();
  for (Eigen::Index i = 0; i < mx.size(); ++i)
    if (!std::isfinite(mx[i])) mx[i] = 0.0;
  const Mat e = (logits.colwise() - mx).array().exp().matrix();
  const Vec s = e.rowwise().sum();
  weighted = e * values;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 0.0) {
      lse[i] = mx[i] + std::log(s[i]);
      weighted.row(i) /= s[i];
    } else {
      lse[i] = kNegInf;
      weighted.row(i).setZero();
    }
  }
}

double lse(const Vec& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return kNegInf;
  return mx + std::log((v.array() - mx).exp().sum());
}

double grid_cell_area(const std::vector<GridAxis>& axes) {
  double a = 1.0;
  for (const auto& ax : axes) a *= ax.step();
  return a;
}

std::size_t grid_size(const std::vector<GridAxis>& axes) {
  std::size_t n = 1;
  for (const auto& ax : axes) n *= static_cast<std::size_t>(ax.n);
  return n;
}

PointSet grid_centers(const std::vector<GridAxis>& axes) {
  const int d = static_cast<int>(axes.size());
  const std::size_t n = grid_size(axes);
  PointSet c(d, static_cast<Eigen::Index>(n));
  const int nx = axes[0].n;
  for (std::size_t k = 0; k < n; ++k) {
    c(0, k) = axes[0].center(static_cast<int>(k % nx));
    if (d == 2) c(1, k) = axes[1].center(static_cast<int>(k / nx));
  }
  return c;
}

// Core of the continuity check: sum over interior cells of
// |(q_plus - q_minus) / (2 dt) + div(flux)| * cell area.
double residual_from_arrays(const std::vector<GridAxis>& axes, const Vec& q_minus, const Vec& q_plus,
                            const PointSet& flux, double dt) {
  const int d = static_cast<int>(axes.size());
  const int nx = axes[0].n;
  const int ny = d == 2 ? axes[1].n : 1;
  const double hx = axes[0].step();
  const double hy = d == 2 ? axes[1].step() : 1.0;
  double total = 0.0;
  for (int iy = (d == 2 ? 1 : 0); iy < (d == 2 ? ny - 1 : 1); ++iy) {
    for (int ix = 1; ix < nx - 1; ++ix) {
      const std::size_t k = static_cast<std::size_t>(iy) * nx + ix;
      double div = (flux(0, k + 1) - flux(0, k - 1)) / (2.0 * hx);
      if (d == 2) div += (flux(1, k + nx) - flux(1, k - nx)) / (2.0 * hy);
      const double dq = (q_plus[k] - q_minus[k]) / (2.0 * dt);
      total += std::abs(dq + div);
    }
  }
  return total * grid_cell_area(axes);
}

}  // namespace

KernelTransform kernel_transform(const std::vector<GridAxis>& source_axes, const Vec& log_weights, double mu,
                                 double sigma, const std::vector<GridAxis>& target_axes, bool normalize_kernel) {
  const int d = static_cast<int>(source_axes.size());
  if (d < 1 || d > 2 || target_axes.size() != source_axes.size())
    throw std::invalid_argument("kernel_transform: grids must both be 1-D or both 2-D");
  if (static_cast<std::size_t>(log_weights.size()) != grid_size(source_axes))
    throw std::invalid_argument("kernel_transform: weight count does not match source grid");
  if (!(sigma > 0.0)) throw std::domain_error("kernel_transform: sigma must be positive");

  KernelTransform out;
  out.axes = target_axes;
  const std::size_t n_out = grid_size(target_axes);
  out.log_mass.resize(static_cast<Eigen::Index>(n_out));
  out.mean.resize(d, static_cast<Eigen::Index>(n_out));

  const Mat K1 = path_log_kernel_1d(target_axes[0], source_axes[0], mu, sigma, normalize_kernel);
  const Vec sx = axis_centers(source_axes[0]);

  if (d == 1) {
    const Mat logits = K1.rowwise() + log_weights.transpose();
    Mat weighted(K1.rows(), 1);
    softmax_rows(logits, sx, out.log_mass, weighted);
    out.mean.row(0) = weighted.col(0).transpose();
    return out;
  }

  const int n0x = source_axes[0].n;
  const int n0y = source_axes[1].n;
  const int nx = target_axes[0].n;
  const int ny = target_axes[1].n;
  const Mat K2 = path_log_kernel_1d(target_axes[1], source_axes[1], mu, sigma, normalize_kernel);
  const Vec sy = axis_centers(source_axes[1]);

  // Pass 1: sum over source x for every (target x, source y).
  Mat logA(nx, n0y);
  Mat R1(nx, n0y);
  {
    Vec lse_col(nx);
    Mat weighted(nx, 1);
    for (int jy = 0; jy < n0y; ++jy) {
      const Vec lw = log_weights.segment(static_cast<Eigen::Index>(jy) * n0x, n0x);
      const Mat logits = K1.rowwise() + lw.transpose();
      softmax_rows(logits, sx, lse_col, weighted);
      logA.col(jy) = lse_col;
      R1.col(jy) = weighted.col(0);
    }
  }

  // Pass 2: sum over source y for every (target x, target y).
  Mat values(n0y, 2);
  values.col(1) = sy;
  Vec lse_col(ny);
  Mat weighted(ny, 2);
  for (int ix = 0; ix < nx; ++ix) {
    const Mat logits = K2.rowwise() + logA.row(ix);
    values.col(0) = R1.row(ix).transpose();
    softmax_rows(logits, values, lse_col, weighted);
    for (int iy = 0; iy < ny; ++iy) {
      const Eigen::Index k = static_cast<Eigen::Index>(iy) * nx + ix;
      out.log_mass[k] = lse_col[iy];
      out.mean(0, k) = weighted(iy, 0);
      out.mean(1, k) = weighted(iy, 1);
    }
  }
  return out;
}

GuidedOracle::GuidedOracle(const GaussianMixture& p0, EnergySpec spec, PathSchedule sched,
                           std::vector<GridAxis> axes)
    : gmm_(p0), spec_(std::move(spec)), sched_(sched), axes_(std::move(axes)) {
  if (static_cast<int>(axes_.size()) != p0.dim()) throw std::invalid_argument("GuidedOracle: grid/mixture dimension mismatch");
  centers_ = grid_centers(axes_);
  log_p0_.resize(centers_.cols());
  for (Eigen::Index k = 0; k < centers_.cols(); ++k) log_p0_[k] = p0.log_density(centers_.col(k));
  init();
}

GuidedOracle::GuidedOracle(const DensityGrid& p0, EnergySpec spec, PathSchedule sched)
    : spec_(std::move(spec)), sched_(sched), axes_(p0.axes()) {
  centers_ = grid_centers(axes_);
  log_p0_.resize(centers_.cols());
  for (Eigen::Index k = 0; k < centers_.cols(); ++k) {
    const double v = p0.value(static_cast<std::size_t>(k));
    log_p0_[k] = v > 0.0 ? std::log(v) : kNegInf;
  }
  init();
}

void GuidedOracle::init() {
  if (axes_.empty() || axes_.size() > 2) throw std::invalid_argument("GuidedOracle: grid must be 1-D or 2-D");
  if (spec_.energy.dim() != dim()) throw std::invalid_argument("GuidedOracle: energy dimension mismatch");
  if (!(spec_.beta >= 0.0)) throw std::invalid_argument("GuidedOracle: beta must be nonnegative");
  energy_.resize(centers_.cols());
  for (Eigen::Index k = 0; k < centers_.cols(); ++k) {
    energy_[k] = spec_.energy(centers_.col(k));
    if (!std::isfinite(energy_[k])) throw std::domain_error("GuidedOracle: energy is not finite on the grid");
  }
}

std::vector<GridAxis> GuidedOracle::default_axes(const GaussianMixture& p0, const EnergySpec& spec, int resolution,
                                                 double pad) {
  Vec lo = Vec::Constant(p0.dim(), std::numeric_limits<double>::infinity());
  Vec hi = -lo;
  auto include = [&](const GaussianMixture& g) {
    double max_sd = 0.0;
    for (const auto& c : g.components()) max_sd = std::max(max_sd, std::sqrt(c.var.maxCoeff()));
    for (const auto& c : g.components()) {
      lo = lo.cwiseMin((c.mean.array() - pad * max_sd).matrix());
      hi = hi.cwiseMax((c.mean.array() + pad * max_sd).matrix());
    }
  };
  include(p0);
  try {
    if (auto tilt = tilted_mixture(p0, spec.energy, spec.beta)) include(*tilt);
  } catch (const std::domain_error&) {
  }
  // Square cells in 2-D.
  const double half = 0.5 * (hi - lo).maxCoeff();
  const Vec mid = 0.5 * (hi + lo);
  return make_axes((mid.array() - half).matrix(), (mid.array() + half).matrix(), resolution);
}

PointSet GuidedOracle::cell_centers() const { return centers_; }

double GuidedOracle::cell_area() const { return grid_cell_area(axes_); }

Vec GuidedOracle::log_weights(double beta) const { return log_p0_ - beta * energy_; }

double GuidedOracle::normalization_constant() const { return normalization_constant(spec_.beta); }

double GuidedOracle::normalization_constant(double beta) const {
  const double l = lse(log_weights(beta));
  if (!std::isfinite(l)) throw std::domain_error("normalization_constant: all quadrature terms underflow");
  return std::exp(l) * cell_area();
}

double GuidedOracle::posterior_lse(const Vec& x, double t, const Vec& logw, Vec* mean) const {
  const double tc = clamp_time(t);
  const double m = sched_.mu(tc);
  const double s = sched_.sigma(tc);
  const double inv = 1.0 / (2.0 * s * s);
  const Eigen::Index n = centers_.cols();
  Vec logits(n);
  for (Eigen::Index k = 0; k < n; ++k) logits[k] = logw[k] - (x - m * centers_.col(k)).squaredNorm() * inv;
  const double mx = logits.maxCoeff();
  if (!std::isfinite(mx)) throw std::domain_error("GuidedOracle: all quadrature terms underflow");
  const Vec e = (logits.array() - mx).exp().matrix();
  const double sum = e.sum();
  if (mean) *mean = centers_ * e / sum;
  const double norm = -0.5 * dim() * std::log(2.0 * std::numbers::pi * s * s);
  return mx + std::log(sum) + norm + std::log(cell_area());
}

double GuidedOracle::intermediate_energy(const Vec& x, double t) const {
  return intermediate_energy(x, t, spec_.beta);
}

double GuidedOracle::intermediate_energy(const Vec& x, double t, double beta) const {
  if (beta == 0.0) return 0.0;
  const double lq = posterior_lse(x, t, log_weights(beta), nullptr);
  const double lp = posterior_lse(x, t, log_p0_, nullptr);
  return -(lq - lp);
}

double GuidedOracle::marginal_log_density(const Vec& x, double t) const {
  return posterior_lse(x, t, log_p0_, nullptr);
}

Vec GuidedOracle::guided_velocity(const Vec& x, double t) const {
  Vec m;
  posterior_lse(x, t, log_weights(spec_.beta), &m);
  return cond_velocity(sched_, x, m, TimePoint(t));
}

Vec GuidedOracle::guided_score(const Vec& x, double t) const { return guided_score(x, t, spec_.beta); }

Vec GuidedOracle::guided_score(const Vec& x, double t, double beta) const {
  Vec m;
  posterior_lse(x, t, log_weights(beta), &m);
  return cond_score(sched_, x, m, TimePoint(t));
}

Vec GuidedOracle::marginal_velocity(const Vec& x, double t) const {
  Vec m;
  posterior_lse(x, t, log_p0_, &m);
  return cond_velocity(sched_, x, m, TimePoint(t));
}

Vec GuidedOracle::marginal_score(const Vec& x, double t) const {
  Vec m;
  posterior_lse(x, t, log_p0_, &m);
  return cond_score(sched_, x, m, TimePoint(t));
}

Vec GuidedOracle::cfg_score_exact(const Vec& x, double t, double beta) const {
  if (!spec_.energy.is_classifier())
    throw std::invalid_argument("cfg_score_exact: energy must be classifier-derived");
  // grad log E_{p_0t(x0|x)}[p(c|x0)] = grad log q_t(beta = 1) - grad log p_t
  const Vec base = marginal_score(x, t);
  return base + beta * (guided_score(x, t, 1.0) - base);
}

Vec GuidedOracle::cep_score_exact(const Vec& x, double t, double beta) const {
  if (!spec_.energy.is_classifier())
    throw std::invalid_argument("cep_score_exact: energy must be classifier-derived");
  return guided_score(x, t, beta);
}

DensityGrid GuidedOracle::guided_q0_grid() const {
  const Vec lw = log_weights(spec_.beta);
  const double log_z = std::log(normalization_constant());
  std::vector<double> v(static_cast<std::size_t>(lw.size()));
  for (Eigen::Index k = 0; k < lw.size(); ++k) v[k] = std::exp(lw[k] - log_z);
  return DensityGrid(axes_, std::move(v));
}

const DensityGrid& GuidedOracle::guided_qt_grid(double t) const {
  const double tc = clamp_time(t);
  std::lock_guard<std::mutex> lock(cache_->mu);
  auto it = cache_->qt.find(tc);
  if (it != cache_->qt.end()) return it->second;

  const double m = sched_.mu(tc);
  const double s = sched_.sigma(tc);
  const double log_area = std::log(cell_area());
  const KernelTransform tq = kernel_transform(axes_, (log_weights(spec_.beta).array() + log_area).matrix(), m, s, axes_);
  const KernelTransform tp = kernel_transform(axes_, (log_p0_.array() + log_area).matrix(), m, s, axes_);
  std::optional<GaussianMixture> pt;
  if (gmm_) pt = gmm_->marginal(sched_, tc);
  const double z = normalization_constant();
  std::vector<double> v(static_cast<std::size_t>(tq.log_mass.size()));
  for (Eigen::Index k = 0; k < tq.log_mass.size(); ++k) {
    if (!std::isfinite(tp.log_mass[k]) || !std::isfinite(tq.log_mass[k])) {
      v[k] = 0.0;
      continue;
    }
    const double log_pt = pt ? pt->log_density(centers_.col(k)) : tp.log_mass[k];
    v[k] = std::exp(log_pt + tq.log_mass[k] - tp.log_mass[k]) / z;
  }
  return cache_->qt.emplace(tc, DensityGrid(axes_, std::move(v))).first->second;
}

DensityGrid GuidedOracle::guided_qt_grid_convolution(double t) const {
  const double tc = clamp_time(t);
  const DensityGrid q0 = guided_q0_grid();
  Vec lw(static_cast<Eigen::Index>(q0.size()));
  const double log_area = std::log(cell_area());
  for (std::size_t k = 0; k < q0.size(); ++k) lw[k] = q0.value(k) > 0.0 ? std::log(q0.value(k)) + log_area : kNegInf;
  const KernelTransform tr = kernel_transform(axes_, lw, sched_.mu(tc), sched_.sigma(tc), axes_);
  std::vector<double> v(q0.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::exp(tr.log_mass[k]);
  return DensityGrid(axes_, std::move(v));
}

double GuidedOracle::tilted_marginal_mass(double t) const {
  const double tc = clamp_time(t);
  const double log_area = std::log(cell_area());
  const KernelTransform tq =
      kernel_transform(axes_, (log_weights(spec_.beta).array() + log_area).matrix(), sched_.mu(tc), sched_.sigma(tc), axes_);
  const KernelTransform tp = kernel_transform(axes_, (log_p0_.array() + log_area).matrix(), sched_.mu(tc), sched_.sigma(tc), axes_);
  std::optional<GaussianMixture> pt;
  if (gmm_) pt = gmm_->marginal(sched_, tc);
  double total = 0.0;
  for (Eigen::Index k = 0; k < tq.log_mass.size(); ++k) {
    if (!std::isfinite(tq.log_mass[k]) || !std::isfinite(tp.log_mass[k])) continue;
    const double log_pt = pt ? pt->log_density(centers_.col(k)) : tp.log_mass[k];
    total += std::exp(log_pt + tq.log_mass[k] - tp.log_mass[k]);
  }
  return total * cell_area();
}

GuidedField GuidedOracle::guided_field(double t, const std::vector<GridAxis>* target, bool normalize_kernel,
                                       std::optional<double> beta) const {
  const double b = beta.value_or(spec_.beta);
  const double tc = clamp_time(t);
  const std::vector<GridAxis>& out_axes = target ? *target : axes_;
  const double log_z = std::log(normalization_constant(b));
  const Vec lw = (log_weights(b).array() - log_z + std::log(cell_area())).matrix();
  const KernelTransform tr = kernel_transform(axes_, lw, sched_.mu(tc), sched_.sigma(tc), out_axes, normalize_kernel);

  GuidedField f;
  f.axes = out_axes;
  f.density = tr.log_mass.array().exp().matrix();
  const PointSet x = grid_centers(out_axes);
  f.velocity.resize(x.rows(), x.cols());
  f.score.resize(x.rows(), x.cols());
  const TimePoint tp(tc);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const Vec xk = x.col(k);
    const Vec mk = tr.mean.col(k);
    f.velocity.col(k) = cond_velocity(sched_, xk, mk, tp);
    f.score.col(k) = cond_score(sched_, xk, mk, tp);
  }
  return f;
}

double GuidedOracle::continuity_residual(double t, const std::vector<GridAxis>* target, double dt) const {
  const std::vector<GridAxis>& out_axes = target ? *target : axes_;
  const double log_z = std::log(normalization_constant());
  const Vec lw = (log_weights(spec_.beta).array() - log_z + std::log(cell_area())).matrix();
  auto density_at = [&](double tt) {
    return kernel_transform(axes_, lw, sched_.mu(tt), sched_.sigma(tt), out_axes).log_mass.array().exp().matrix().eval();
  };
  const Vec q_minus = density_at(t - dt);
  const Vec q_plus = density_at(t + dt);
  const GuidedField f = guided_field(t, &out_axes);
  PointSet flux = f.velocity;
  for (Eigen::Index k = 0; k < flux.cols(); ++k) flux.col(k) *= f.density[k];
  return residual_from_arrays(out_axes, q_minus, q_plus, flux, dt);
}

double continuity_residual(const std::vector<GridAxis>& axes, double t,
                           const std::function<double(const Vec&, double)>& density,
                           const std::function<Vec(const Vec&, double)>& velocity, double dt) {
  const PointSet x = grid_centers(axes);
  Vec q_minus(x.cols());
  Vec q_plus(x.cols());
  PointSet flux(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const Vec xk = x.col(k);
    q_minus[k] = density(xk, t - dt);
    q_plus[k] = density(xk, t + dt);
    flux.col(k) = density(xk, t) * velocity(xk, t);
  }
  return residual_from_arrays(axes, q_minus, q_plus, flux, dt);
}

double normalization_constant(const GaussianMixture& p0, const Energy& energy, double beta, int resolution) {
  if (auto z = normalization_constant_closed_form(p0, energy, beta)) return *z;
  if (p0.dim() > 2) throw std::invalid_argument("normalization_constant: quadrature needs dimension <= 2");
  const EnergySpec spec{energy, beta};
  const GuidedOracle oracle(p0, spec, PathSchedule::ot(), GuidedOracle::default_axes(p0, spec, resolution));
  return oracle.normalization_constant();
}

}  // namespace ewflow
