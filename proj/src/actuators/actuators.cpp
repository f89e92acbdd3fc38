#include "batchlab/actuators/actuators.hpp"

#include <algorithm>
#include <cmath>

#include "batchlab/core/error.hpp"

namespace batchlab::act {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_non_negative(double v, const char* what, const std::string& name) {
  if (!(v >= 0.0)) throw InvalidArgument("actuator '" + name + "': " + what + " must be >= 0");
}

}  // namespace

ActuatorKind actuator_kind_from_string(const std::string& name) {
  if (name == "implicit_pd") return ActuatorKind::kImplicitPd;
  if (name == "ideal_pd") return ActuatorKind::kIdealPd;
  if (name == "dc_motor") return ActuatorKind::kDcMotor;
  if (name == "delayed_pd") return ActuatorKind::kDelayedPd;
  if (name == "remotized_pd") return ActuatorKind::kRemotizedPd;
  if (name == "neural") return ActuatorKind::kNeural;
  throw InvalidArgument("unknown actuator kind '" + name + "'");
}

std::string to_string(ActuatorKind kind) {
  switch (kind) {
    case ActuatorKind::kImplicitPd: return "implicit_pd";
    case ActuatorKind::kIdealPd: return "ideal_pd";
    case ActuatorKind::kDcMotor: return "dc_motor";
    case ActuatorKind::kDelayedPd: return "delayed_pd";
    case ActuatorKind::kRemotizedPd: return "remotized_pd";
    case ActuatorKind::kNeural: return "neural";
  }
  return "unknown";
}

void FrictionConfig::validate() const {
  if (coulomb < 0.0 || static_limit < 0.0 || slip_threshold < 0.0 || viscous < 0.0) {
    throw InvalidArgument("friction coefficients must be >= 0");
  }
  if (mode == FrictionMode::kStiction && !(slip_threshold > 0.0)) {
    throw InvalidArgument("stiction friction requires a positive slip threshold");
  }
}

void ActuatorConfig::validate() const {
  require_non_negative(stiffness, "stiffness", name);
  require_non_negative(damping, "damping", name);
  require_non_negative(effort_limit, "effort limit", name);
  require_non_negative(velocity_limit, "velocity limit", name);
  require_non_negative(armature, "armature", name);
  require_non_negative(saturation_effort, "saturation effort", name);
  if (delay_steps < 0) throw InvalidArgument("actuator '" + name + "': delay must be >= 0");
  friction.validate();
  for (std::size_t i = 1; i < limit_table.size(); ++i) {
    if (!(limit_table[i].first > limit_table[i - 1].first)) {
      throw InvalidArgument("actuator '" + name + "': limit table keys must be strictly increasing");
    }
  }
  if (kind == ActuatorKind::kRemotizedPd && limit_table.empty()) {
    throw InvalidArgument("actuator '" + name + "': remotized actuator needs a limit table");
  }
  if (kind == ActuatorKind::kDcMotor && !(velocity_limit > 0.0 && std::isfinite(velocity_limit))) {
    throw InvalidArgument("actuator '" + name + "': dc motor needs a finite velocity limit");
  }
  if (kind == ActuatorKind::kNeural && (!neural || history_length < 1)) {
    throw InvalidArgument("actuator '" + name + "': neural actuator needs a hook and history >= 1");
  }
}

void JointActuatorState::reset() {
  delay_buffer.clear();
  error_history.clear();
  velocity_history.clear();
  last_effort = 0.0;
}

double apply_friction(const FrictionConfig& friction, double effort, double qd) {
  switch (friction.mode) {
    case FrictionMode::kNone:
      return effort;
    case FrictionMode::kStiction:
      if (std::abs(qd) < friction.slip_threshold) {
        return effort - std::clamp(effort, -friction.static_limit, friction.static_limit);
      }
      [[fallthrough]];
    case FrictionMode::kCoulomb:
      return effort - friction.coulomb * sign(qd) - friction.viscous * qd;
  }
  return effort;
}

double clip_velocity(const ActuatorConfig& config, double qd_target) {
  return std::clamp(qd_target, -config.velocity_limit, config.velocity_limit);
}

std::pair<double, double> dc_motor_envelope(const ActuatorConfig& config, double qd) {
  const double ratio = qd / config.velocity_limit;
  const double upper = std::clamp(config.saturation_effort * (1.0 - ratio), 0.0, config.effort_limit);
  const double lower = std::clamp(-config.saturation_effort * (1.0 + ratio), -config.effort_limit, 0.0);
  return {lower, upper};
}

double remotized_limit(const ActuatorConfig& config, double q) {
  const auto& t = config.limit_table;
  if (q <= t.front().first) return t.front().second;
  if (q >= t.back().first) return t.back().second;
  const auto it = std::upper_bound(t.begin(), t.end(), q,
                                   [](double v, const auto& e) { return v < e.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double s = (q - lo.first) / (hi.first - lo.first);
  return lo.second + s * (hi.second - lo.second);
}

double compute_effort(const ActuatorConfig& config, JointActuatorState& state,
                      const JointCommand& command, double q, double qd, int joint) {
  return compute_effort(config, state, command, q, qd, Gains{config.stiffness, config.damping}, joint);
}

double compute_effort(const ActuatorConfig& config, JointActuatorState& state,
                      const JointCommand& command, double q, double qd, Gains gains, int joint) {
  if (config.kind == ActuatorKind::kImplicitPd) {
    throw InvalidArgument("actuator '" + config.name +
                          "' is implicit; its effort is computed inside the dynamics step");
  }
  if (!std::isfinite(command.position) || !std::isfinite(command.velocity) ||
      !std::isfinite(command.effort)) {
    throw InvalidArgument("non-finite command for joint " + std::to_string(joint) +
                          " of actuator '" + config.name + "'");
  }

  JointCommand active = command;
  if (config.kind == ActuatorKind::kDelayedPd) {
    const auto len = static_cast<std::size_t>(config.delay_steps) + 1;
    if (state.delay_buffer.empty()) state.delay_buffer.assign(len, command);
    state.delay_buffer.push_back(command);
    while (state.delay_buffer.size() > len) state.delay_buffer.pop_front();
    active = state.delay_buffer.front();
  }

  double effort = 0.0;
  if (config.kind == ActuatorKind::kNeural) {
    const auto len = static_cast<std::size_t>(config.history_length);
    if (state.error_history.empty()) {
      state.error_history.assign(len, 0.0);
      state.velocity_history.assign(len, 0.0);
    }
    state.error_history.push_back(active.position - q);
    state.velocity_history.push_back(qd);
    while (state.error_history.size() > len) state.error_history.pop_front();
    while (state.velocity_history.size() > len) state.velocity_history.pop_front();
    const std::vector<double> errors(state.error_history.begin(), state.error_history.end());
    const std::vector<double> vels(state.velocity_history.begin(), state.velocity_history.end());
    effort = config.neural(errors, vels);
  } else {
    effort = gains.stiffness * (active.position - q) + gains.damping * (active.velocity - qd) +
             active.effort;
  }

  effort = apply_friction(config.friction, effort, qd);

  double lower = -config.effort_limit;
  double upper = config.effort_limit;
  if (config.kind == ActuatorKind::kDcMotor) {
    std::tie(lower, upper) = dc_motor_envelope(config, qd);
  } else if (config.kind == ActuatorKind::kRemotizedPd) {
    const double lim = std::min(remotized_limit(config, q), config.effort_limit);
    lower = -lim;
    upper = lim;
  }
  effort = std::clamp(effort, lower, upper);
  state.last_effort = effort;
  return effort;
}

RotorWrench rotor_wrench(double thrust_coeff, double moment_coeff, int direction, double omega) {
  if (omega < 0.0) throw InvalidArgument("rotor speed must be non-negative");
  const double w2 = omega * omega;
  return {thrust_coeff * w2, -static_cast<double>(direction) * moment_coeff * w2};
}

std::pair<Vec3, Vec3> multirotor_wrench(std::span<const Rotor> rotors,
                                        std::span<const double> omegas) {
  if (rotors.size() != omegas.size()) throw InvalidArgument("one speed per rotor required");
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
  for (std::size_t i = 0; i < rotors.size(); ++i) {
    const Rotor& r = rotors[i];
    const RotorWrench w = rotor_wrench(r.thrust_coeff, r.moment_coeff, r.direction, omegas[i]);
    const Vec3 axis = r.axis.normalized();
    const Vec3 f = w.thrust * axis;
    force += f;
    torque += r.position.cross(f) + w.moment * axis;
  }
  return {force, torque};
}

ActuatorGroup::ActuatorGroup(ActuatorConfig config, int env_count)
    : config_(std::move(config)),
      env_count_(env_count),
      default_gains_{config_.stiffness, config_.damping},
      gains_(static_cast<std::size_t>(env_count), default_gains_),
      states_(static_cast<std::size_t>(env_count) * config_.joints.size()) {
  config_.validate();
}

void ActuatorGroup::set_gains(int env, Gains g) {
  if (g.stiffness < 0.0 || g.damping < 0.0) throw InvalidArgument("gains must be >= 0");
  gains_.at(static_cast<std::size_t>(env)) = g;
}

void ActuatorGroup::compute(int env, std::span<const JointCommand> commands, const VecX& q,
                            const VecX& qd, VecX& effort) {
  const std::size_t n = config_.joints.size();
  const Gains g = gains_[static_cast<std::size_t>(env)];
  for (std::size_t k = 0; k < n; ++k) {
    const int j = config_.joints[k];
    auto& st = states_[static_cast<std::size_t>(env) * n + k];
    effort(j) = compute_effort(config_, st, commands[static_cast<std::size_t>(j)], q(j), qd(j), g, j);
  }
}

void ActuatorGroup::fill_implicit(int env, std::span<const JointCommand> commands,
                                  dyn::ImplicitPd& pd, VecX& feedforward) const {
  const Gains g = gains_[static_cast<std::size_t>(env)];
  for (const int j : config_.joints) {
    const auto& c = commands[static_cast<std::size_t>(j)];
    pd.stiffness(j) = g.stiffness;
    pd.damping(j) = g.damping;
    pd.position_target(j) = c.position;
    pd.velocity_target(j) = clip_velocity(config_, c.velocity);
    pd.effort_limit(j) = config_.effort_limit;
    feedforward(j) = c.effort;
  }
}

void ActuatorGroup::reset(int env) {
  const std::size_t n = config_.joints.size();
  for (std::size_t k = 0; k < n; ++k) states_[static_cast<std::size_t>(env) * n + k].reset();
}

}  // namespace batchlab::act
