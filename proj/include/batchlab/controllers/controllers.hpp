#pragma once

#include <optional>
#include <string>

#include "batchlab/core/math.hpp"
#include "batchlab/dynamics/tree.hpp"

namespace batchlab::ctrl {

/// Position error (target - current, world) stacked over the axis-angle of
/// target * current^-1 with angle in [0, pi]. At exactly pi the axis sign is
/// chosen so its first non-zero component among (z, y, x) is positive.
Vec6 pose_error(const Transform& current, const Transform& target);

/// Axis-angle vector of a rotation with the same antipodal convention.
Vec3 rotation_error(const Quat& current, const Quat& target);

enum class IkMethod { kPinv, kSvdAdaptive, kTranspose, kDamped };
enum class IkTarget { kPosition, kPose };
enum class IkCommandMode { kAbsolute, kRelative };

IkMethod ik_method_from_string(const std::string& name);

struct IkConfig {
  IkMethod method = IkMethod::kDamped;
  IkTarget target = IkTarget::kPose;
  IkCommandMode command_mode = IkCommandMode::kAbsolute;
  double damping = 0.05;                  // lambda, damped
  std::optional<double> singular_cutoff;  // svd_adaptive; default 0.05 * sigma_max
  double transpose_gain = 1.0;            // alpha, transpose
  double step_scale = 1.0;

  void validate() const;
};

/// Reciprocal cutoff used by plain pseudo-inverse.
inline constexpr double kPinvCutoff = 1e-12;

/// Joint displacement for a task-space error. `jacobian` rows must match
/// `dx` (3 for position, 6 for pose).
VecX diff_ik_step(const MatX& jacobian, const VecX& dx, const IkConfig& config);

/// Stateful wrapper holding the end-effector target.
class DiffIkController {
 public:
  explicit DiffIkController(IkConfig config);

  const IkConfig& config() const { return config_; }
  /// Absolute: `command` is the target (position, or position + axis-angle).
  /// Relative: `command` offsets the current pose (rotation pre-multiplied).
  void set_command(const VecX& command, const Transform& current);
  const Transform& target() const { return target_; }
  /// Command length for the configured target and mode.
  int command_size() const;

  /// Desired joint positions given the 6 x n Jacobian of the end-effector
  /// (linear rows first); only linear rows are used in position mode.
  VecX compute(const Transform& current, const MatX& jacobian, const VecX& q) const;

 private:
  IkConfig config_;
  Transform target_;
};

// ---------------------------------------------------------------------------
// Joint impedance

struct JointImpedanceOptions {
  bool gravity_compensation = false;
  bool inertia_scaling = false;
};

/// tau = [M] (K (q* - q) - D qd) + [g(q)] over the actuated joints. Gains
/// are per joint and may change every call (variable impedance). A floating
/// root is held at `root_pose` with zero velocity.
VecX joint_impedance(const dyn::KinematicTree& tree, const VecX& q, const VecX& qd,
                     const VecX& q_target, const VecX& stiffness, const VecX& damping,
                     const JointImpedanceOptions& options, const Transform& root_pose = {},
                     const Vec3& gravity = Vec3(0.0, 0.0, -9.81));

// ---------------------------------------------------------------------------
// Operational space

struct TaskSpaceGains {
  VecX stiffness;  // diagonal
  VecX damping;    // diagonal
  VecX selection;  // diagonal of {0, 1}: 1 motion, 0 force
  VecX feedforward_wrench;

  static TaskSpaceGains motion(int dims, double stiffness, double damping);
  void validate(int dims) const;
};

struct NullSpacePosture {
  VecX q_reference;
  double stiffness = 0.0;
  double damping = 0.0;
};

/// Regularizer added to J M^-1 J^T before inversion.
inline constexpr double kOscRegularizer = 1e-8;

struct OscOutput {
  VecX torque;
  VecX task_torque;
  VecX null_torque;
  MatX task_inertia;  // Lambda
};

/// Operational-space control for an m-dimensional task error `dx` and task
/// velocity `xd`. `gravity_torque` may be empty. Throws InvalidArgument when
/// the mass matrix is not positive definite.
OscOutput osc(const MatX& jacobian, const MatX& mass, const VecX& gravity_torque, const VecX& dx,
              const VecX& xd, const TaskSpaceGains& gains, const VecX& q, const VecX& qd,
              const std::optional<NullSpacePosture>& posture = std::nullopt);

}  // namespace batchlab::ctrl
