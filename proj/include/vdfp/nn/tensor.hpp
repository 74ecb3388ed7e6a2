#pragma once

#include <Eigen/Dense>

namespace vdfp {

// Row-major so that consecutive rows of a padded trajectory are contiguous in
// memory; convolution windows and reshapes rely on this.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

}  // namespace vdfp
