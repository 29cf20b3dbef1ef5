#include "c4g/rotation.hpp"

#include <cmath>

#include "c4g/error.hpp"
#include "c4g/rng.hpp"

namespace c4g {

Quaternion Quaternion::normalized() const {
  double n = norm();
  C4G_CHECK(n > 1e-12, ErrorKind::kNumeric, "cannot normalize near-zero quaternion");
  return {w / n, x / n, y / n, z / n};
}

Eigen::Matrix3d quat_to_matrix(const Quaternion& qi) {
  Quaternion q = qi.normalized();
  Eigen::Matrix3d m;
  m << 1 - 2 * (q.y * q.y + q.z * q.z), 2 * (q.x * q.y - q.z * q.w), 2 * (q.x * q.z + q.y * q.w),
      2 * (q.x * q.y + q.z * q.w), 1 - 2 * (q.x * q.x + q.z * q.z), 2 * (q.y * q.z - q.x * q.w),
      2 * (q.x * q.z - q.y * q.w), 2 * (q.y * q.z + q.x * q.w), 1 - 2 * (q.x * q.x + q.y * q.y);
  return m;
}

Quaternion matrix_to_quat(const Eigen::Matrix3d& m) {
  Quaternion q;
  double tr = m.trace();
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2;
    q.w = 0.25 * s;
    q.x = (m(2, 1) - m(1, 2)) / s;
    q.y = (m(0, 2) - m(2, 0)) / s;
    q.z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2;
    q.w = (m(2, 1) - m(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (m(0, 1) + m(1, 0)) / s;
    q.z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2;
    q.w = (m(0, 2) - m(2, 0)) / s;
    q.x = (m(0, 1) + m(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (m(1, 2) + m(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2;
    q.w = (m(1, 0) - m(0, 1)) / s;
    q.x = (m(0, 2) + m(2, 0)) / s;
    q.y = (m(1, 2) + m(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q.normalized();
}

Eigen::Matrix3d rotation_z(double theta) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = std::cos(theta);
  m(0, 1) = -std::sin(theta);
  m(1, 0) = std::sin(theta);
  m(1, 1) = std::cos(theta);
  return m;
}

Rot6d matrix_to_rot6d(const Eigen::Matrix3d& m) {
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

Eigen::Matrix3d rot6d_to_matrix(const Rot6d& r) {
  Eigen::Vector3d a(r[0], r[1], r[2]), b(r[3], r[4], r[5]);
  double na = a.norm();
  C4G_CHECK(na > 1e-8, ErrorKind::kNumeric, "rot6d: first column near zero");
  Eigen::Vector3d b1 = a / na;
  Eigen::Vector3d b2 = b - b1.dot(b) * b1;
  double nb = b2.norm();
  C4G_CHECK(nb > 1e-8, ErrorKind::kNumeric, "rot6d: columns near collinear");
  b2 /= nb;
  Eigen::Vector3d b3 = b1.cross(b2);
  Eigen::Matrix3d m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b3;
  return m;
}

double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c);
}

Quaternion random_quaternion(Rng& rng) {
  Quaternion q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized();
}

}  // namespace c4g
