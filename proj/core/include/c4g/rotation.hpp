// Plain-double rotation utilities: quaternions, 6D representation,
// Gram-Schmidt orthonormalization and geodesic metrics. The differentiable
// counterparts used in losses live in decoders.hpp; these back data
// generation, evaluation and tests.
#pragma once

#include <Eigen/Dense>
#include <array>

namespace c4g {

struct Quaternion {
  double w = 1, x = 0, y = 0, z = 0;

  Quaternion() = default;
  Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quaternion normalized() const;
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
};

Eigen::Matrix3d quat_to_matrix(const Quaternion& q);
Quaternion matrix_to_quat(const Eigen::Matrix3d& m);

// Rotation about the +z axis by theta radians.
Eigen::Matrix3d rotation_z(double theta);

// 6D representation: the first two columns of the rotation matrix.
using Rot6d = std::array<double, 6>;

Rot6d matrix_to_rot6d(const Eigen::Matrix3d& m);

// Gram-Schmidt on the two stored columns, cross product for the third.
// Throws a numeric error for degenerate inputs.
Eigen::Matrix3d rot6d_to_matrix(const Rot6d& r);

// Geodesic angle between two rotations in radians.
double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Uniformly random rotation (via normalized quaternion components).
class Rng;
Quaternion random_quaternion(Rng& rng);

}  // namespace c4g
