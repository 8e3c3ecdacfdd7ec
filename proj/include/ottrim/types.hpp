#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace ottrim {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Read-only view of the N rows belonging to one frame.
using FrameView = Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true>;

}  // namespace ottrim
