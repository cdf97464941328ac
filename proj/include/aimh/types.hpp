#pragma once

#include <Eigen/Dense>

namespace aimh {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace aimh
