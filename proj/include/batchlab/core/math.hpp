#pragma once

// Spatial math shared by every module. Z-up world frame, meters, radians.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace batchlab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Matrix6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Unit quaternion stored as (w, x, y, z). Eigen's storage order differs, so
/// only the accessors are shared.
using Quat = Eigen::Quaterniond;

inline Quat identity_quat() { return Quat::Identity(); }

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

/// Exponential map of a rotation vector (axis * angle).
inline Quat quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    q.normalize();
    return q;
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

/// Skew-symmetric cross-product matrix: skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& a) {
  Mat3 s;
  s << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return s;
}

struct Transform {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  static Transform identity() { return {}; }
  static Transform from_translation(const Vec3& p) { return {p, Quat::Identity()}; }
  static Transform from_rotation(const Quat& q) { return {Vec3::Zero(), q}; }

  Vec3 apply(const Vec3& point) const { return orientation * point + position; }
  Vec3 rotate(const Vec3& v) const { return orientation * v; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = orientation.toRotationMatrix();
    m.topRightCorner<3, 1>() = position;
    return m;
  }
};

/// Returns the transform that applies `b` first, then `a`.
inline Transform compose(const Transform& a, const Transform& b) {
  return {a.orientation * b.position + a.position, (a.orientation * b.orientation).normalized()};
}

inline Transform inverse(const Transform& t) {
  const Quat inv = t.orientation.conjugate();
  return {-(inv * t.position), inv};
}

/// Pose of `target` expressed in the frame of `source`:
/// compose(source, relative_pose(source, target)) == target.
inline Transform relative_pose(const Transform& source, const Transform& target) {
  return compose(inverse(source), target);
}

inline bool approx_equal(const Transform& a, const Transform& b, double tol) {
  // q and -q encode the same rotation.
  const double dq = std::min((a.orientation.coeffs() - b.orientation.coeffs()).norm(),
                             (a.orientation.coeffs() + b.orientation.coeffs()).norm());
  return (a.position - b.position).norm() <= tol && dq <= tol;
}

}  // namespace batchlab
