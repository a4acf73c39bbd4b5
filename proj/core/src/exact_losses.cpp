#include "ewflow/exact_losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ewflow {

namespace {

PointSet centers_of(const std::vector<GridAxis>& axes) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.n);
  PointSet c(static_cast<Eigen::Index>(axes.size()), static_cast<Eigen::Index>(n));
  const int nx = axes[0].n;
  for (std::size_t k = 0; k < n; ++k) {
    c(0, k) = axes[0].center(static_cast<int>(k % nx));
    if (axes.size() == 2) c(1, k) = axes[1].center(static_cast<int>(k / nx));
  }
  return c;
}

double area_of(const std::vector<GridAxis>& axes) {
  double a = 1.0;
  for (const auto& ax : axes) a *= ax.step();
  return a;
}

void check_model(const Mlp& model, const GuidedOracle& oracle) {
  const MlpSpec& s = model.spec();
  if (s.x_dim != oracle.dim() || s.out_dim != oracle.dim())
    throw std::invalid_argument("exact loss: model dimensions do not match the oracle");
  if (s.context_dim != 0 || s.accepts_beta())
    throw std::invalid_argument("exact loss: model must take only (x, t)");
}

ConditionInput grid_input(const PointSet& x, double t) {
  ConditionInput in;
  in.x = x;
  in.t = Vec::Constant(x.cols(), t);
  return in;
}

// Marginal form: sum_x weight(x) || scale * net(x) - target(x) ||^2 per t node.
LossResult marginal_loss(const Mlp& model, const GuidedOracle& oracle, const ExactQuadrature& quad, bool score,
                         ScoreParam param) {
  check_model(model, oracle);
  const PointSet x = centers_of(quad.x_axes);
  const double dA = area_of(quad.x_axes);
  LossResult r;
  r.grad.assign(model.param_count(), 0.0);
  for (std::size_t k = 0; k < quad.t_nodes.size(); ++k) {
    const double t = quad.t_nodes[k];
    const GuidedField f = oracle.guided_field(t, &quad.x_axes, quad.normalize_kernel);
    const Mat& target = score ? f.score : f.velocity;
    const double scale =
        score && param == ScoreParam::Noise ? -1.0 / oracle.schedule().sigma(clamp_time(t)) : 1.0;
    const Vec w = (quad.t_weights[k] * dA) * f.density;
    const LossResult lr = weighted_regression_loss(model, grid_input(x, t), Vec::Constant(x.cols(), scale), target, w);
    r.loss += lr.loss;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += lr.grad[i];
  }
  return r;
}

// Conditional form, expanded pair by pair over (x, x0). The target is
// alpha x + gamma x0.
LossResult conditional_loss(const Mlp& model, const GuidedOracle& oracle, const ExactQuadrature& quad, bool score,
                            ScoreParam param) {
  check_model(model, oracle);
  const PointSet x = centers_of(quad.x_axes);
  const PointSet x0 = oracle.cell_centers();
  const double dA = area_of(quad.x_axes);
  const double dA0 = oracle.cell_area();
  const DensityGrid q0 = oracle.guided_q0_grid();
  const int d = oracle.dim();
  const auto& sa = oracle.axes();
  const auto& ta = quad.x_axes;
  const int nx = ta[0].n;
  const int n0x = sa[0].n;
  const PathSchedule& sched = oracle.schedule();

  LossResult r;
  r.grad.assign(model.param_count(), 0.0);
  Mlp::Tape tape;
  for (std::size_t k = 0; k < quad.t_nodes.size(); ++k) {
    const double t = clamp_time(quad.t_nodes[k]);
    const double mu = sched.mu(t);
    const double sigma = sched.sigma(t);
    double alpha;
    double gamma;
    if (score) {
      alpha = -1.0 / (sigma * sigma);
      gamma = mu / (sigma * sigma);
    } else {
      const AffineCoeffs c = sched.cond_velocity_coeffs(t);
      alpha = c.a;
      gamma = c.b;
    }
    const double scale = score && param == ScoreParam::Noise ? -1.0 / sigma : 1.0;
    const Mat K1 = path_log_kernel_1d(ta[0], sa[0], mu, sigma, quad.normalize_kernel).array().exp().matrix();
    Mat K2;
    if (d == 2) K2 = path_log_kernel_1d(ta[1], sa[1], mu, sigma, quad.normalize_kernel).array().exp().matrix();

    const Mat pred = scale * model.forward(grid_input(x, t), tape);
    Mat dpred = Mat::Zero(pred.rows(), pred.cols());
    const double wt = quad.t_weights[k] * dA * dA0;
    double loss_t = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const int ix = static_cast<int>(i % nx);
      const int iy = static_cast<int>(i / nx);
      const Vec xi = x.col(i);
      const Vec bi = pred.col(i);
      Vec g = Vec::Zero(d);
      double li = 0.0;
      for (Eigen::Index j = 0; j < x0.cols(); ++j) {
        const double qj = q0.value(static_cast<std::size_t>(j));
        if (qj == 0.0) continue;
        const int jx = static_cast<int>(j % n0x);
        const int jy = static_cast<int>(j / n0x);
        const double kern = d == 2 ? K1(ix, jx) * K2(iy, jy) : K1(ix, jx);
        const double w = qj * kern;
        const Vec res = bi - (alpha * xi + gamma * x0.col(j));
        li += w * res.squaredNorm();
        g += (2.0 * w) * res;
      }
      loss_t += li;
      dpred.col(i) = wt * g;
    }
    r.loss += wt * loss_t;
    model.backward(tape, scale * dpred, r.grad);
  }
  return r;
}

}  // namespace

ExactQuadrature make_exact_quadrature(const GuidedOracle& oracle, int time_nodes, const std::vector<GridAxis>* x_axes,
                                      bool normalize_kernel) {
  if (time_nodes < 1) throw std::invalid_argument("make_exact_quadrature: need at least one time node");
  ExactQuadrature q;
  q.x_axes = x_axes ? *x_axes : oracle.axes();
  q.normalize_kernel = normalize_kernel;
  const double lo = kTimeEps;
  const double hi = 1.0 - kTimeEps;
  const double h = (hi - lo) / time_nodes;
  for (int k = 0; k < time_nodes; ++k) {
    q.t_nodes.push_back(lo + (k + 0.5) * h);
    q.t_weights.push_back(1.0 / time_nodes);
  }
  return q;
}

LossResult loss_efm_exact(const Mlp& model, const GuidedOracle& oracle, const ExactQuadrature& quad) {
  return marginal_loss(model, oracle, quad, false, ScoreParam::Direct);
}

LossResult loss_cefm_exact(const Mlp& model, const GuidedOracle& oracle, const ExactQuadrature& quad) {
  return conditional_loss(model, oracle, quad, false, ScoreParam::Direct);
}

LossResult loss_ed_exact(const Mlp& model, ScoreParam param, const GuidedOracle& oracle, const ExactQuadrature& quad) {
  return marginal_loss(model, oracle, quad, true, param);
}

LossResult loss_ced_exact(const Mlp& model, ScoreParam param, const GuidedOracle& oracle, const ExactQuadrature& quad) {
  return conditional_loss(model, oracle, quad, true, param);
}

double relative_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_difference: size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace ewflow
