#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "batchlab/core/math.hpp"
#include "batchlab/dynamics/dynamics.hpp"

namespace batchlab::act {

inline constexpr double kUnlimited = std::numeric_limits<double>::infinity();

enum class ActuatorKind { kImplicitPd, kIdealPd, kDcMotor, kDelayedPd, kRemotizedPd, kNeural };

ActuatorKind actuator_kind_from_string(const std::string& name);
std::string to_string(ActuatorKind kind);

enum class FrictionMode { kNone, kCoulomb, kStiction };

struct FrictionConfig {
  FrictionMode mode = FrictionMode::kNone;
  double coulomb = 0.0;         // N m
  double static_limit = 0.0;    // N m
  double slip_threshold = 0.0;  // rad/s
  double viscous = 0.0;         // N m s/rad

  void validate() const;
};

/// Maps a history window of (position error, joint velocity) pairs, oldest
/// first, to an effort.
using NeuralHook = std::function<double(std::span<const double> position_errors,
                                        std::span<const double> velocities)>;

struct ActuatorConfig {
  std::string name;
  std::vector<int> joints;
  ActuatorKind kind = ActuatorKind::kIdealPd;
  double stiffness = 0.0;
  double damping = 0.0;
  double effort_limit = kUnlimited;
  double velocity_limit = kUnlimited;
  double armature = 0.0;
  FrictionConfig friction;

  double saturation_effort = 0.0;  // dc_motor
  int delay_steps = 0;             // delayed_pd
  std::vector<std::pair<double, double>> limit_table;  // remotized_pd: (q, effort limit)
  NeuralHook neural;               // neural
  int history_length = 3;          // neural

  void validate() const;
};

struct JointCommand {
  double position = 0.0;
  double velocity = 0.0;
  double effort = 0.0;
};

/// Mutable per-joint actuator state.
struct JointActuatorState {
  std::deque<JointCommand> delay_buffer;
  std::deque<double> error_history;
  std::deque<double> velocity_history;
  double last_effort = 0.0;

  void reset();
};

struct Gains {
  double stiffness;
  double damping;
};

/// Effort for one joint using the configured gains. Throws InvalidArgument
/// for implicit actuators and for non-finite commands (naming `joint`).
double compute_effort(const ActuatorConfig& config, JointActuatorState& state,
                      const JointCommand& command, double q, double qd, int joint = -1);

/// Same, with gains overriding the configured ones.
double compute_effort(const ActuatorConfig& config, JointActuatorState& state,
                      const JointCommand& command, double q, double qd, Gains gains,
                      int joint = -1);

double apply_friction(const FrictionConfig& friction, double effort, double qd);

double clip_velocity(const ActuatorConfig& config, double qd_target);

/// Upper and lower effort envelope of the linear four-quadrant curve.
std::pair<double, double> dc_motor_envelope(const ActuatorConfig& config, double qd);

/// Position-dependent effort limit (table end values outside the domain).
double remotized_limit(const ActuatorConfig& config, double q);

// ---------------------------------------------------------------------------
// Thrusters

struct RotorWrench {
  double thrust = 0.0;  // N along the rotor axis
  double moment = 0.0;  // N m about the rotor axis
};

/// thrust = k_f w^2, moment = -direction k_m w^2. Throws on w < 0.
RotorWrench rotor_wrench(double thrust_coeff, double moment_coeff, int direction, double omega);

struct Rotor {
  Vec3 position = Vec3::Zero();  // body frame
  Vec3 axis = Vec3::UnitZ();
  int direction = 1;
  double thrust_coeff = 1e-5;
  double moment_coeff = 1e-7;
};

/// Net body-frame (force, torque) about the body origin from all rotors.
std::pair<Vec3, Vec3> multirotor_wrench(std::span<const Rotor> rotors,
                                        std::span<const double> omegas);

// ---------------------------------------------------------------------------
// Batched groups

/// One actuator configuration applied to a joint subset across every
/// environment, with per-environment gains for randomization.
class ActuatorGroup {
 public:
  ActuatorGroup(ActuatorConfig config, int env_count);

  const ActuatorConfig& config() const { return config_; }
  int env_count() const { return env_count_; }
  bool implicit() const { return config_.kind == ActuatorKind::kImplicitPd; }

  Gains gains(int env) const { return gains_[static_cast<std::size_t>(env)]; }
  void set_gains(int env, Gains g);
  const Gains& default_gains() const { return default_gains_; }

  /// Writes efforts for this group's joints of environment `env` into
  /// `effort`. Commands, q and qd are full-dof vectors.
  void compute(int env, std::span<const JointCommand> commands, const VecX& q, const VecX& qd,
               VecX& effort);

  /// Writes implicit PD terms for this group's joints into `pd`.
  void fill_implicit(int env, std::span<const JointCommand> commands, dyn::ImplicitPd& pd,
                     VecX& feedforward) const;

  void reset(int env);

 private:
  ActuatorConfig config_;
  int env_count_;
  Gains default_gains_;
  std::vector<Gains> gains_;
  std::vector<JointActuatorState> states_;  // env-major, joint-minor
};

}  // namespace batchlab::act
