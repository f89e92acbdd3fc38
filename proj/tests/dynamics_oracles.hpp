#pragma once

// Test-only reference models. Nothing here calls into the dynamics kernel
// except to read the tree description.

#include <cmath>
#include <random>
#include <vector>

#include "batchlab/dynamics/tree.hpp"

namespace batchlab::testing {

/// Rodrigues rotation matrix, independent of the quaternion code path.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d a = axis.normalized();
  Eigen::Matrix3d k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

/// Forward kinematics as a product of homogeneous matrices.
inline std::vector<Eigen::Matrix4d> fk_matrix_chain(const dyn::KinematicTree& tree,
                                                    const Eigen::VectorXd& q) {
  std::vector<Eigen::Matrix4d> out(static_cast<std::size_t>(tree.link_count()));
  for (int i = 0; i < tree.link_count(); ++i) {
    const auto& l = tree.link(i);
    Eigen::Matrix4d offset = Eigen::Matrix4d::Identity();
    offset.topLeftCorner<3, 3>() = l.parent_to_joint.orientation.toRotationMatrix();
    offset.topRightCorner<3, 1>() = l.parent_to_joint.position;
    Eigen::Matrix4d joint = Eigen::Matrix4d::Identity();
    const int j = tree.joint_index(i);
    if (l.joint == dyn::JointKind::kRevolute) {
      joint.topLeftCorner<3, 3>() = rodrigues(l.axis, q(j));
    } else if (l.joint == dyn::JointKind::kPrismatic) {
      joint.topRightCorner<3, 1>() = q(j) * l.axis;
    }
    const Eigen::Matrix4d parent =
        l.parent >= 0 ? out[static_cast<std::size_t>(l.parent)] : Eigen::Matrix4d::Identity();
    out[static_cast<std::size_t>(i)] = parent * offset * joint;
  }
  return out;
}

/// Random serial chain with `n` revolute/prismatic joints.
inline dyn::KinematicTree random_chain(std::mt19937_64& rng, int n, bool allow_prismatic = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.2, 2.0);
  dyn::KinematicTree tree;
  for (int i = 0; i < n; ++i) {
    dyn::Link l;
    l.name = "link" + std::to_string(i);
    l.parent = i - 1;
    l.joint = (allow_prismatic && u(rng) > 0.5) ? dyn::JointKind::kPrismatic : dyn::JointKind::kRevolute;
    l.axis = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
    Eigen::Quaterniond o(u(rng), u(rng), u(rng), u(rng));
    o.normalize();
    l.parent_to_joint = {Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.5, o};
    l.mass = pos(rng);
    l.com = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.3;
    Eigen::Matrix3d a = Eigen::Matrix3d::Random();
    l.inertia = a * a.transpose() * 0.1 + 0.05 * Eigen::Matrix3d::Identity();
    tree.add_link(l);
  }
  return tree;
}

/// Planar two-link arm rotating about +z with point-like inertias about each
/// COM. Gravity is applied along -y so the closed forms below use the
/// standard x-y plane conventions.
struct TwoLinkParams {
  double m1 = 1.0, m2 = 0.8;
  double l1 = 1.0;
  double lc1 = 0.5, lc2 = 0.4;
  double i1 = 0.05, i2 = 0.03;
  double g = 9.81;
};

inline dyn::KinematicTree two_link_tree(const TwoLinkParams& p) {
  dyn::KinematicTree tree;
  dyn::Link a;
  a.name = "upper";
  a.joint = dyn::JointKind::kRevolute;
  a.axis = Eigen::Vector3d::UnitZ();
  a.mass = p.m1;
  a.com = Eigen::Vector3d(p.lc1, 0, 0);
  a.inertia = Eigen::Vector3d(0.01, p.i1, p.i1).asDiagonal();
  tree.add_link(a);
  dyn::Link b;
  b.name = "lower";
  b.parent = 0;
  b.joint = dyn::JointKind::kRevolute;
  b.axis = Eigen::Vector3d::UnitZ();
  b.parent_to_joint = Transform::from_translation(Eigen::Vector3d(p.l1, 0, 0));
  b.mass = p.m2;
  b.com = Eigen::Vector3d(p.lc2, 0, 0);
  b.inertia = Eigen::Vector3d(0.01, p.i2, p.i2).asDiagonal();
  tree.add_link(b);
  return tree;
}

/// Lagrangian closed forms for the two-link arm.
struct TwoLinkLagrangian {
  TwoLinkParams p;

  Eigen::Matrix2d mass(const Eigen::Vector2d& q) const {
    const double c2 = std::cos(q(1));
    Eigen::Matrix2d m;
    m(0, 0) = p.m1 * p.lc1 * p.lc1 + p.i1 +
              p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * c2) + p.i2;
    m(0, 1) = m(1, 0) = p.m2 * (p.lc2 * p.lc2 + p.l1 * p.lc2 * c2) + p.i2;
    m(1, 1) = p.m2 * p.lc2 * p.lc2 + p.i2;
    return m;
  }

  Eigen::Vector2d bias(const Eigen::Vector2d& q, const Eigen::Vector2d& qd) const {
    const double h = p.m2 * p.l1 * p.lc2 * std::sin(q(1));
    Eigen::Vector2d c(-h * (2.0 * qd(0) * qd(1) + qd(1) * qd(1)), h * qd(0) * qd(0));
    const double c1 = std::cos(q(0)), c12 = std::cos(q(0) + q(1));
    Eigen::Vector2d g((p.m1 * p.lc1 + p.m2 * p.l1) * p.g * c1 + p.m2 * p.lc2 * p.g * c12,
                      p.m2 * p.lc2 * p.g * c12);
    return c + g;
  }

  /// Semi-implicit Euler with an explicit 2x2 inverse.
  void step(Eigen::Vector2d& q, Eigen::Vector2d& qd, const Eigen::Vector2d& tau, double dt) const {
    const Eigen::Matrix2d m = mass(q);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Eigen::Matrix2d inv;
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    inv /= det;
    qd += dt * inv * (tau - bias(q, qd));
    q += dt * qd;
  }
};

}  // namespace batchlab::testing
