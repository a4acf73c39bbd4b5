#pragma once

#include <Eigen/Dense>

namespace ewflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A set of points stored column-wise: dim × count.
using PointSet = Eigen::MatrixXd;

}  // namespace ewflow
