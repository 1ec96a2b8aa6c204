#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace relight {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Latent reflectance code carried by every Gaussian.
inline constexpr int kFeatureDim = 16;
using Feature = Eigen::Matrix<double, kFeatureDim, 1>;

struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double softplus(double x) {
  // log(1+e^x), stable for large |x|
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace relight
