#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "batchlab/envman/config.hpp"
#include "batchlab/envman/scene.hpp"

namespace batchlab::env {

using Flags = std::vector<std::uint8_t>;
using ObsGroups = std::map<std::string, MatX>;  // group -> (env_count x dim)
using Extras = std::map<std::string, VecX>;     // key -> per-env values

/// The tuple returned by reset and step. Observations of envs reset during
/// the step belong to their new episode.
struct StepResult {
  ObsGroups observations;
  VecX reward;
  Flags terminated;
  Flags truncated;
  Extras extras;

  /// Bitwise equality of every field.
  bool operator==(const StepResult& other) const;
};

/// Phase names recorded by the step trace, in loop order.
namespace phase {
inline constexpr const char* kProcessActions = "process_actions";
inline constexpr const char* kApplyActions = "apply_actions";
inline constexpr const char* kPreSimEvents = "pre_sim_events";
inline constexpr const char* kSimStep = "sim_step";
inline constexpr const char* kRender = "render";
inline constexpr const char* kUpdateScene = "update_scene";
inline constexpr const char* kCounters = "counters";
inline constexpr const char* kTerminations = "terminations";
inline constexpr const char* kRewards = "rewards";
inline constexpr const char* kResetCurriculum = "reset_curriculum";
inline constexpr const char* kResetEvents = "reset_events";
inline constexpr const char* kResetBuffers = "reset_buffers";
inline constexpr const char* kResetWrite = "reset_write";
inline constexpr const char* kResetSensors = "reset_sensors";
inline constexpr const char* kCommands = "commands";
inline constexpr const char* kIntervalEvents = "interval_events";
inline constexpr const char* kObservations = "observations";
}  // namespace phase

/// Outer loop shared by the manager-based and direct workflows. Subclasses
/// supply the MDP through the protected hooks; everything else (decimation,
/// counters, timeouts, reset sequencing, the returned tuple) lives here.
class EnvBase {
 public:
  EnvBase(EnvSettings settings, SceneSpec scene);
  virtual ~EnvBase() = default;
  EnvBase(const EnvBase&) = delete;
  EnvBase& operator=(const EnvBase&) = delete;

  /// Starts a fresh episode in every environment.
  StepResult reset();
  /// Starts new episodes in `env_ids` only; other envs are untouched. The
  /// returned tuple carries observations for every env.
  StepResult reset(std::span<const int> env_ids);
  /// `actions` is (env_count x action_dim). Throws InvalidArgument naming
  /// the first env with a non-finite action; DivergenceError propagates.
  StepResult step(const MatX& actions);

  virtual int action_dim() const = 0;

  const EnvSettings& settings() const { return settings_; }
  int env_count() const { return settings_.env_count; }
  double env_dt() const { return settings_.env_dt(); }
  Scene& scene() { return *scene_; }
  const Scene& scene() const { return *scene_; }
  int episode_steps(int env) const { return episode_steps_.at(static_cast<std::size_t>(env)); }
  double episode_time(int env) const { return episode_steps(env) * env_dt(); }
  std::uint64_t total_steps() const { return total_steps_; }
  /// Per-environment random stream derived from the master seed.
  std::mt19937_64& rng(int env) { return rngs_.at(static_cast<std::size_t>(env)); }

  void set_trace(bool enabled) { trace_enabled_ = enabled; }
  const std::vector<std::string>& trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }

 protected:
  virtual void process_actions(const MatX& actions) = 0;
  /// Called every substep before the actuator models run.
  virtual void apply_actions() {}
  virtual void pre_sim_events() {}
  virtual void compute_terminations(Flags& terminated, Extras& extras) = 0;
  virtual void compute_rewards(VecX& reward, Extras& extras) = 0;
  virtual void reset_curriculum(std::span<const int> /*env_ids*/) {}
  /// Mutates `staged` (default states for `env_ids`, same order).
  virtual void reset_events(std::span<const int> env_ids, std::vector<dyn::ArticulationState>& staged) = 0;
  virtual void reset_buffers(std::span<const int> /*env_ids*/) {}
  /// `elapsed` is env_dt during a step and 0 for an explicit reset.
  virtual void update_commands(std::span<const int> /*reset_ids*/, double /*elapsed*/) {}
  virtual void interval_events() {}
  virtual ObsGroups compute_observations() = 0;

  void record(const char* phase_name);

 private:
  void reset_envs(std::span<const int> env_ids);

  EnvSettings settings_;
  std::unique_ptr<Scene> scene_;
  std::vector<int> episode_steps_;
  std::vector<std::mt19937_64> rngs_;
  std::uint64_t total_steps_ = 0;
  std::uint64_t substeps_ = 0;
  bool trace_enabled_ = false;
  std::vector<std::string> trace_;
};

class DirectEnv;

/// Outputs a direct post_physics hook fills. Both arrive zeroed.
struct DirectOutput {
  VecX reward;
  Flags terminated;
  Extras extras;
};

/// User-written MDP for the direct workflow. Only `action_dim`,
/// `pre_physics` and `observe` are required.
struct DirectHooks {
  int action_dim = 0;
  std::function<void(DirectEnv&)> setup;
  /// Turns the action batch into joint commands.
  std::function<void(DirectEnv&, const MatX&)> pre_physics;
  std::function<void(DirectEnv&, DirectOutput&)> post_physics;
  std::function<void(DirectEnv&, std::span<const int>, std::vector<dyn::ArticulationState>&)> reset;
  std::function<ObsGroups(DirectEnv&)> observe;
};

/// Single-class environment: all MDP logic is delegated to hooks. Hook
/// exceptions other than DivergenceError are rethrown as Error naming the
/// hook and env step.
class DirectEnv : public EnvBase {
 public:
  DirectEnv(EnvSettings settings, SceneSpec scene, DirectHooks hooks);

  int action_dim() const override { return hooks_.action_dim; }

 protected:
  void process_actions(const MatX& actions) override;
  void compute_terminations(Flags& terminated, Extras& extras) override;
  void compute_rewards(VecX& reward, Extras& extras) override;
  void reset_events(std::span<const int> env_ids, std::vector<dyn::ArticulationState>& staged) override;
  ObsGroups compute_observations() override;

 private:
  template <typename F>
  void guarded(const char* hook, F&& f);

  DirectHooks hooks_;
  DirectOutput pending_;
};

}  // namespace batchlab::env
