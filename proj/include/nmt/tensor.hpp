#pragma once

#include <Eigen/Dense>

namespace nmt {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using MatI = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace nmt
