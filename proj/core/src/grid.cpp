#include "ewflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ewflow {

int GridAxis::locate(double x) const {
  if (!(x >= lo && x < hi)) return -1;
  const int i = static_cast<int>((x - lo) / step());
  return std::min(i, n - 1);
}

DensityGrid::DensityGrid(std::vector<GridAxis> axes, std::vector<double> values)
    : axes_(std::move(axes)), values_(std::move(values)) {
  validate();
}

void DensityGrid::validate() const {
  if (axes_.empty() || axes_.size() > 2) throw std::invalid_argument("DensityGrid: dim must be 1 or 2");
  std::size_t expected = 1;
  for (const auto& a : axes_) {
    if (a.n < 1 || !(a.hi > a.lo)) throw std::invalid_argument("DensityGrid: bad axis");
    expected *= static_cast<std::size_t>(a.n);
  }
  if (values_.size() != expected) throw std::invalid_argument("DensityGrid: value count mismatch");
  for (double v : values_)
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("DensityGrid: values must be finite and nonnegative");
}

DensityGrid DensityGrid::zeros(std::vector<GridAxis> axes) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.n);
  return DensityGrid(std::move(axes), std::vector<double>(n, 0.0));
}

DensityGrid DensityGrid::from_function(std::vector<GridAxis> axes,
                                       const std::function<double(const Vec&)>& fn) {
  DensityGrid g = zeros(std::move(axes));
  for (std::size_t i = 0; i < g.size(); ++i) g.values_[i] = fn(g.center(i));
  g.validate();
  return g;
}

double DensityGrid::cell_area() const {
  double a = 1.0;
  for (const auto& ax : axes_) a *= ax.step();
  return a;
}

Vec DensityGrid::center(std::size_t flat) const {
  Vec c(dim());
  const int nx = axes_[0].n;
  c[0] = axes_[0].center(static_cast<int>(flat % nx));
  if (dim() == 2) c[1] = axes_[1].center(static_cast<int>(flat / nx));
  return c;
}

long DensityGrid::locate(const Vec& x) const {
  const int ix = axes_[0].locate(x[0]);
  if (ix < 0) return -1;
  if (dim() == 1) return ix;
  const int iy = axes_[1].locate(x[1]);
  if (iy < 0) return -1;
  return static_cast<long>(flat_index(ix, iy));
}

double DensityGrid::total_mass() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) * cell_area();
}

bool DensityGrid::is_normalized(double tol) const { return std::abs(total_mass() - 1.0) <= tol; }

DensityGrid& DensityGrid::normalize() {
  const double m = total_mass();
  if (!(m > 0.0) || !std::isfinite(m)) throw std::domain_error("DensityGrid::normalize: zero mass");
  for (double& v : values_) v /= m;
  return *this;
}

PointSet DensityGrid::sample(Rng& rng, std::size_t n) const {
  if (!is_normalized()) throw std::domain_error("grid_sample: grid is not normalized");
  std::vector<double> cdf(values_.size());
  std::partial_sum(values_.begin(), values_.end(), cdf.begin());
  const double total = cdf.back();
  PointSet out(dim(), static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t k = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
    while (values_[k] == 0.0 && k > 0) --k;
    const int nx = axes_[0].n;
    const int ix = static_cast<int>(k % nx);
    out(0, s) = axes_[0].lo + (ix + rng.uniform()) * axes_[0].step();
    if (dim() == 2) {
      const int iy = static_cast<int>(k / nx);
      out(1, s) = axes_[1].lo + (iy + rng.uniform()) * axes_[1].step();
    }
  }
  return out;
}

DensityGrid DensityGrid::coarsen(int factor) const {
  std::vector<GridAxis> axes = axes_;
  for (auto& a : axes) {
    if (a.n % factor != 0) throw std::invalid_argument("DensityGrid::coarsen: resolution not divisible");
    a.n /= factor;
  }
  DensityGrid out = zeros(axes);
  const double ratio = cell_area() / out.cell_area();
  const int nx = axes_[0].n;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const int ix = static_cast<int>(k % nx) / factor;
    const int iy = dim() == 2 ? static_cast<int>(k / nx) / factor : 0;
    out.values_[out.flat_index(ix, iy)] += values_[k] * ratio;
  }
  return out;
}

Vec DensityGrid::mean() const {
  Vec m = Vec::Zero(dim());
  double total = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    m += values_[k] * center(k);
    total += values_[k];
  }
  return m / total;
}

Vec DensityGrid::variance() const {
  const Vec m = mean();
  Vec v = Vec::Zero(dim());
  double total = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    v.array() += values_[k] * (center(k) - m).array().square();
    total += values_[k];
  }
  return v / total;
}

void DensityGrid::write(std::ostream& os) const {
  nlohmann::json h;
  h["format"] = "ewflow-density-grid";
  h["dim"] = dim();
  h["bounds"] = nlohmann::json::array();
  h["resolution"] = nlohmann::json::array();
  for (const auto& a : axes_) {
    h["bounds"].push_back({a.lo, a.hi});
    h["resolution"].push_back(a.n);
  }
  h["cell_area"] = cell_area();
  h["layout"] = "row-major, one CSV row per y cell (a single row in 1-D), x varies fastest";
  os << h.dump() << '\n';
  const int nx = axes_[0].n;
  const int ny = dim() == 2 ? axes_[1].n : 1;
  std::ostringstream line;
  line.precision(17);
  for (int iy = 0; iy < ny; ++iy) {
    line.str("");
    for (int ix = 0; ix < nx; ++ix) {
      if (ix) line << ',';
      line << values_[flat_index(ix, iy)];
    }
    os << line.str() << '\n';
  }
}

DensityGrid DensityGrid::read(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("DensityGrid::read: missing header");
  const auto h = nlohmann::json::parse(header);
  std::vector<GridAxis> axes;
  const auto& bounds = h.at("bounds");
  const auto& res = h.at("resolution");
  for (std::size_t d = 0; d < bounds.size(); ++d)
    axes.push_back({bounds[d][0].get<double>(), bounds[d][1].get<double>(), res[d].get<int>()});
  std::vector<double> values;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  }
  return DensityGrid(std::move(axes), std::move(values));
}

std::vector<GridAxis> make_axes(const Vec& lo, const Vec& hi, int resolution) {
  std::vector<GridAxis> axes;
  for (Eigen::Index d = 0; d < lo.size(); ++d) axes.push_back({lo[d], hi[d], resolution});
  return axes;
}

}  // namespace ewflow
