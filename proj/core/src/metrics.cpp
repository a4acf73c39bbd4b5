#include "ewflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ewflow {

namespace {

PointSet subsample(const PointSet& p, Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(p.cols());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.cols() - i)));
    std::swap(idx[i], idx[j]);
  }
  PointSet out(p.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) out.col(i) = p.col(idx[i]);
  return out;
}

}  // namespace

double wasserstein2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("wasserstein2_1d: size mismatch");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double sliced_wasserstein(const PointSet& a, const PointSet& b, int n_proj, Rng& rng) {
  if (a.cols() == 0 || b.cols() == 0) throw std::invalid_argument("sliced_wasserstein: empty point set");
  if (a.rows() != b.rows()) throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  if (n_proj < 1) throw std::invalid_argument("sliced_wasserstein: n_proj must be >= 1");
  const Eigen::Index n = std::min(a.cols(), b.cols());
  const PointSet sa = a.cols() > n ? subsample(a, n, rng) : a;
  const PointSet sb = b.cols() > n ? subsample(b, n, rng) : b;
  double total = 0.0;
  std::vector<double> pa(n), pb(n);
  for (int k = 0; k < n_proj; ++k) {
    Vec dir = rng.normal_vec(a.rows());
    dir /= dir.norm();
    for (Eigen::Index i = 0; i < n; ++i) {
      pa[i] = sa.col(i).dot(dir);
      pb[i] = sb.col(i).dot(dir);
    }
    total += wasserstein2_1d(pa, pb);
  }
  return total / n_proj;
}

TvResult grid_tv_distance(const PointSet& samples, const DensityGrid& grid) {
  if (samples.rows() != grid.dim()) throw std::invalid_argument("grid_tv_distance: dimension mismatch");
  if (samples.cols() == 0) throw std::invalid_argument("grid_tv_distance: no samples");
  std::vector<double> hist(grid.size(), 0.0);
  std::size_t clipped = 0;
  const auto& axes = grid.axes();
  for (Eigen::Index s = 0; s < samples.cols(); ++s) {
    int idx[2] = {0, 0};
    bool was_clipped = false;
    for (int d = 0; d < grid.dim(); ++d) {
      const auto& ax = axes[d];
      const double x = samples(d, s);
      int i = static_cast<int>(std::floor((x - ax.lo) / ax.step()));
      if (i < 0 || i >= ax.n || !std::isfinite(x)) {
        was_clipped = true;
        i = std::isfinite(x) ? std::clamp(i, 0, ax.n - 1) : 0;
      }
      idx[d] = i;
    }
    if (was_clipped) ++clipped;
    hist[grid.flat_index(idx[0], idx[1])] += 1.0;
  }
  const double n = static_cast<double>(samples.cols());
  const double area = grid.cell_area();
  const double total = grid.total_mass();
  double tv = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) tv += std::abs(hist[k] / n - grid.value(k) * area / total);
  return {0.5 * tv, static_cast<double>(clipped) / n};
}

Moments sample_moments(const PointSet& samples) {
  const Vec mean = samples.rowwise().mean();
  const Mat centered = samples.colwise() - mean;
  const Vec var = centered.array().square().rowwise().sum() / static_cast<double>(samples.cols());
  return {mean, var};
}

}  // namespace ewflow
