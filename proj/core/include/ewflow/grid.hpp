#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ewflow/rng.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

// Uniform cell-centred axis: n cells covering [lo, hi].
struct GridAxis {
  double lo = -1.0;
  double hi = 1.0;
  int n = 1;

  double step() const { return (hi - lo) / n; }
  double center(int i) const { return lo + (i + 0.5) * step(); }
  // Cell index containing x, or -1 when outside [lo, hi).
  int locate(double x) const;
};

// Nonnegative values on a 1-D or 2-D tensor grid. In 2-D the storage is
// row-major with y as the row index: value(ix, iy) = values[iy * nx + ix].
class DensityGrid {
 public:
  DensityGrid() = default;
  DensityGrid(std::vector<GridAxis> axes, std::vector<double> values);

  static DensityGrid zeros(std::vector<GridAxis> axes);
  static DensityGrid from_function(std::vector<GridAxis> axes,
                                   const std::function<double(const Vec&)>& fn);

  int dim() const { return static_cast<int>(axes_.size()); }
  const std::vector<GridAxis>& axes() const { return axes_; }
  std::size_t size() const { return values_.size(); }
  double cell_area() const;

  Vec center(std::size_t flat) const;
  std::size_t flat_index(int ix, int iy = 0) const {
    return static_cast<std::size_t>(iy) * axes_[0].n + ix;
  }
  // Flat index of the cell containing x, or -1 outside the grid.
  long locate(const Vec& x) const;

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double value(std::size_t flat) const { return values_[flat]; }

  double total_mass() const;
  bool is_normalized(double tol = 1e-3) const;
  DensityGrid& normalize();

  // Categorical draw over cell masses, then uniform jitter within the cell.
  PointSet sample(Rng& rng, std::size_t n) const;

  // Sum masses of factor^dim blocks; resolution must be divisible by factor.
  DensityGrid coarsen(int factor) const;

  // Mean and per-coordinate variance under the grid density.
  Vec mean() const;
  Vec variance() const;

  // Header line: JSON object; then one CSV row per y index.
  void write(std::ostream& os) const;
  static DensityGrid read(std::istream& is);

 private:
  void validate() const;

  std::vector<GridAxis> axes_;
  std::vector<double> values_;
};

// Axes covering a box, one entry per dimension.
std::vector<GridAxis> make_axes(const Vec& lo, const Vec& hi, int resolution);

}  // namespace ewflow
