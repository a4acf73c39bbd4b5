#pragma once

#include <string>
#include <vector>

#include "ewflow/gmm.hpp"

namespace ewflow {

// Named synthetic densities, all represented as diagonal Gaussian mixtures.
//   1-D: gaussian, bimodal
//   2-D: 8gaussians, 25gaussians, ring, 2spirals, moons, checkerboard
std::vector<std::string> dataset_names();
GaussianMixture make_dataset(const std::string& name);

}  // namespace ewflow
