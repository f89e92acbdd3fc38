#pragma once

#include <string>
#include <vector>

#include "batchlab/core/math.hpp"

namespace batchlab::dyn {

enum class JointKind { kRevolute, kPrismatic, kFixed, kFree };

/// One rigid link and its inboard joint. The link frame coincides with the
/// joint frame after joint motion: X_link = X_parent * parent_to_joint * J(q).
struct Link {
  std::string name;
  int parent = -1;
  JointKind joint = JointKind::kFixed;
  Vec3 axis = Vec3::UnitZ();
  Transform parent_to_joint;
  double mass = 1.0;
  Vec3 com = Vec3::Zero();         // in the link frame
  Mat3 inertia = Mat3::Identity();  // about the COM, link frame
};

/// Immutable, topologically sorted articulation description.
///
/// Velocity coordinates are laid out as [root twist (6, free root only);
/// joint velocities (dof)]. The root twist is (linear velocity of the root
/// link origin, angular velocity), both in world coordinates.
class KinematicTree {
 public:
  KinematicTree() = default;

  /// Appends a link and returns its index. Throws InvalidArgument when the
  /// topology, mass, or inertia is invalid.
  int add_link(Link link);

  const std::vector<Link>& links() const { return links_; }
  const Link& link(int i) const { return links_.at(static_cast<std::size_t>(i)); }
  int link_count() const { return static_cast<int>(links_.size()); }
  int find_link(const std::string& name) const;

  bool floating() const { return floating_; }
  /// Joint degrees of freedom (excludes the free root).
  int dof() const { return dof_; }
  /// Velocity-space dimension: dof() plus 6 for a free root.
  int nv() const { return dof_ + (floating_ ? 6 : 0); }
  int root_offset() const { return floating_ ? 6 : 0; }

  /// Index into q/qd of the link's joint, or -1 for fixed and free joints.
  int joint_index(int link) const { return q_index_.at(static_cast<std::size_t>(link)); }
  /// Link owning joint coordinate `j`.
  int joint_link(int j) const { return dof_link_.at(static_cast<std::size_t>(j)); }

  double total_mass() const;

  /// Returns a copy with link `i` mass (and inertia, as a uniform density
  /// change) scaled by `factor`.
  KinematicTree with_mass_scaled(int i, double factor) const;

 private:
  std::vector<Link> links_;
  std::vector<int> q_index_;
  std::vector<int> dof_link_;
  int dof_ = 0;
  bool floating_ = false;
};

/// Per-environment articulation state.
struct ArticulationState {
  VecX q;
  VecX qd;
  Transform root_pose;  // floating-base pose, or the static mount of a fixed base
  Vec3 root_lin_vel = Vec3::Zero();
  Vec3 root_ang_vel = Vec3::Zero();
  /// Body-frame (force, torque) per link applied at the link COM; consumed
  /// and cleared by the next step.
  std::vector<Vec6> external_wrench;

  static ArticulationState zeros(const KinematicTree& tree);

  /// Generalized velocity [root twist; qd].
  VecX velocity(const KinematicTree& tree) const;
  void set_velocity(const KinematicTree& tree, const VecX& v);
};

}  // namespace batchlab::dyn
