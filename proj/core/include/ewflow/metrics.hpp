#pragma once

#include "ewflow/grid.hpp"
#include "ewflow/rng.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

// Mean over random unit directions of the 1-D 2-Wasserstein distance between
// the projected point sets. The larger set is subsampled without replacement
// to the size of the smaller one.
double sliced_wasserstein(const PointSet& a, const PointSet& b, int n_proj, Rng& rng);

// Exact 1-D W2 between equally sized sorted samples.
double wasserstein2_1d(std::vector<double> a, std::vector<double> b);

struct TvResult {
  double tv = 0.0;
  double clipped_fraction = 0.0;
};

// Half L1 distance between the sample histogram on the grid's cells and the
// grid's cell masses. Samples outside the grid are clamped to the border cell.
TvResult grid_tv_distance(const PointSet& samples, const DensityGrid& grid);

struct Moments {
  Vec mean;
  Vec var;
};
Moments sample_moments(const PointSet& samples);

}  // namespace ewflow
