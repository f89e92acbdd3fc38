#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "batchlab/core/math.hpp"
#include "batchlab/dynamics/tree.hpp"

namespace batchlab::dyn {

inline const Vec3 kDefaultGravity{0.0, 0.0, -9.81};

// ---------------------------------------------------------------------------
// Kinematics

/// World transform of every link.
std::vector<Transform> forward_kinematics(const KinematicTree& tree, const VecX& q,
                                          const Transform& root_pose);

/// Spatial velocity of every link as [angular; linear velocity of the
/// body-fixed point at the world origin], world coordinates.
std::vector<Vec6> link_spatial_velocities(const KinematicTree& tree, const VecX& q,
                                          const ArticulationState& state);

/// Linear velocity of a world point rigidly attached to a link with the given
/// spatial velocity.
inline Vec3 point_velocity(const Vec6& spatial, const Vec3& world_point) {
  return spatial.tail<3>() + spatial.head<3>().cross(world_point);
}

/// 6 x nv Jacobian of a point on `link` given in link coordinates. Rows are
/// linear velocity then angular velocity; columns follow the velocity layout
/// of KinematicTree (root twist first for a free root).
MatX jacobian(const KinematicTree& tree, const VecX& q, const Transform& root_pose, int link,
              const Vec3& point_offset);

// ---------------------------------------------------------------------------
// Dynamics

/// Joint-space inertia by the composite rigid body algorithm. `armature` has
/// one entry per joint dof (or is empty) and is added to the diagonal.
MatX mass_matrix(const KinematicTree& tree, const VecX& q, const Transform& root_pose,
                 const VecX& armature = {});

/// Coriolis, centrifugal and gravity generalized forces (recursive
/// Newton-Euler with zero acceleration). External wrenches stored in `state`
/// enter with a negative sign.
VecX bias_forces(const KinematicTree& tree, const ArticulationState& state,
                 const Vec3& gravity = kDefaultGravity, bool include_external = false);

/// Generalized force produced by a world-frame force applied at a world
/// point on `link` (J^T f).
VecX generalized_force(const KinematicTree& tree, const VecX& q, const Transform& root_pose,
                       int link, const Vec3& world_point, const Vec3& force);

// ---------------------------------------------------------------------------
// Contacts

struct TerrainSample {
  double height = 0.0;
  Vec3 normal = Vec3::UnitZ();
  int surface_id = 0;
};

/// Surface height below a world point.
using TerrainQuery = std::function<TerrainSample(const Vec3&)>;

inline TerrainQuery flat_ground(double height = 0.0) {
  return [height](const Vec3&) { return TerrainSample{height, Vec3::UnitZ(), 0}; };
}

struct ContactProbe {
  int link = 0;
  Vec3 offset = Vec3::Zero();  // sphere center in link frame
  double radius = 0.05;
  double stiffness = 1e4;      // N/m
  double damping = 1e2;        // N s/m, normal direction
  double friction = 1.0;       // Coulomb coefficient
  double tangential_damping = 1e3;  // N s/m, viscous slip resistance before the cone clamp
};

/// Probe spheres used for compliant penalty contacts.
struct ContactPointSet {
  std::vector<ContactProbe> probes;

  /// Throws InvalidArgument if any radius <= 0 or coefficient < 0.
  void validate() const;
};

struct ProbeContact {
  double normal_force = 0.0;
  Vec3 tangent_force = Vec3::Zero();
  bool in_contact = false;
  Vec3 normal = Vec3::UnitZ();
  Vec3 point = Vec3::Zero();
  int surface_id = -1;

  Vec3 world_force() const { return normal_force * normal + tangent_force; }
};

/// Penalty force at a single probe given its penetration depth (m),
/// normal separation velocity (m/s, positive when separating) and
/// tangential slip velocity.
ProbeContact penalty_contact(const ContactProbe& probe, double penetration,
                             double normal_velocity, const Vec3& slip_velocity,
                             const Vec3& normal);

/// Evaluates every probe against the terrain.
std::vector<ProbeContact> contact_forces(const std::vector<Transform>& link_transforms,
                                         const std::vector<Vec6>& link_velocities,
                                         const ContactPointSet& probes,
                                         const TerrainQuery& terrain);

// ---------------------------------------------------------------------------
// Integration

/// Joint PD folded into the integrator's linear solve.
struct ImplicitPd {
  VecX stiffness;
  VecX damping;
  VecX position_target;
  VecX velocity_target;
  VecX effort_limit;  // empty = unlimited
};

struct StepOptions {
  double dt = 1e-3;
  Vec3 gravity = kDefaultGravity;
  VecX armature;        // per joint dof, empty = zero
  VecX velocity_limit;  // per joint dof, empty = unlimited
  const ImplicitPd* implicit_pd = nullptr;
  const ContactPointSet* probes = nullptr;
  TerrainQuery terrain;
  int env_index = 0;  // reported in DivergenceError
};

struct StepOutput {
  std::vector<ProbeContact> contacts;
  /// Effort produced by the implicit PD after the solve (empty without PD).
  VecX implicit_effort;
};

/// Semi-implicit Euler step. Solves
///   (M + dt D + dt^2 K) v+ = M v + dt (tau + Jc^T fc - bias + K (q* - q) + D qd*)
/// then q+ = q + dt v+. Velocity limits are clamped after the solve. External
/// wrenches are consumed and cleared. Throws DivergenceError on non-finite
/// state.
StepOutput step(const KinematicTree& tree, ArticulationState& state, const VecX& joint_efforts,
                const StepOptions& options);

// ---------------------------------------------------------------------------
// External wrenches

/// Accumulates a body-frame force/torque on `link`. Throws InvalidArgument on
/// a bad link index.
void apply_external_wrench(const KinematicTree& tree, ArticulationState& state, int link,
                           const Vec3& force, const Vec3& torque);

/// Applies the same wrench to every state in a batch.
void apply_external_wrench(const KinematicTree& tree, std::span<ArticulationState> states,
                           int link, const Vec3& force, const Vec3& torque);

/// Kinetic plus gravitational potential energy.
double total_energy(const KinematicTree& tree, const ArticulationState& state,
                    const Vec3& gravity = kDefaultGravity);

}  // namespace batchlab::dyn
