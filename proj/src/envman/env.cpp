#include "batchlab/envman/env.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "batchlab/core/error.hpp"

namespace batchlab::env {

namespace {

bool bitwise_equal(const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::equal(a.data(), a.data() + a.size(), b.data(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

}  // namespace

bool StepResult::operator==(const StepResult& other) const {
  if (terminated != other.terminated || truncated != other.truncated) return false;
  if (!bitwise_equal(reward, other.reward)) return false;
  if (observations.size() != other.observations.size() || extras.size() != other.extras.size()) return false;
  for (const auto& [k, v] : observations) {
    const auto it = other.observations.find(k);
    if (it == other.observations.end() || !bitwise_equal(v, it->second)) return false;
  }
  for (const auto& [k, v] : extras) {
    const auto it = other.extras.find(k);
    if (it == other.extras.end() || !bitwise_equal(v, it->second)) return false;
  }
  return true;
}

EnvBase::EnvBase(EnvSettings settings, SceneSpec scene) : settings_(settings) {
  settings_.validate();
  scene_ = std::make_unique<Scene>(std::move(scene), settings_.env_count, settings_.physics_dt, settings_.seed);
  const auto n = static_cast<std::size_t>(settings_.env_count);
  episode_steps_.assign(n, 0);
  rngs_.reserve(n);
  for (std::size_t e = 0; e < n; ++e) rngs_.emplace_back(derive_seed(settings_.seed, 1000 + e));
}

void EnvBase::record(const char* phase_name) {
  if (trace_enabled_) trace_.emplace_back(phase_name);
}

StepResult EnvBase::reset() {
  std::vector<int> all(static_cast<std::size_t>(env_count()));
  std::iota(all.begin(), all.end(), 0);
  return reset(all);
}

StepResult EnvBase::reset(std::span<const int> env_ids) {
  std::vector<int> ids(env_ids.begin(), env_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (const int e : ids) {
    if (e < 0 || e >= env_count()) throw InvalidArgument("reset env index " + std::to_string(e) + " out of range");
  }
  reset_envs(ids);
  record(phase::kCommands);
  update_commands(ids, 0.0);
  StepResult r;
  r.reward = VecX::Zero(env_count());
  r.terminated.assign(static_cast<std::size_t>(env_count()), 0);
  r.truncated.assign(static_cast<std::size_t>(env_count()), 0);
  record(phase::kObservations);
  r.observations = compute_observations();
  return r;
}

StepResult EnvBase::step(const MatX& actions) {
  const int n = env_count();
  if (actions.rows() != n || actions.cols() != action_dim()) {
    throw InvalidArgument("actions must be " + std::to_string(n) + " x " + std::to_string(action_dim()) +
                          ", got " + std::to_string(actions.rows()) + " x " + std::to_string(actions.cols()));
  }
  for (int e = 0; e < n; ++e) {
    if (!actions.row(e).allFinite()) throw InvalidArgument("non-finite action in env " + std::to_string(e));
  }

  record(phase::kProcessActions);
  process_actions(actions);
  for (int s = 0; s < settings_.decimation; ++s) {
    record(phase::kApplyActions);
    apply_actions();
    scene_->apply_actuators();
    record(phase::kPreSimEvents);
    pre_sim_events();
    record(phase::kSimStep);
    scene_->step_physics();
    ++substeps_;
    if (settings_.render_interval > 0 && substeps_ % static_cast<std::uint64_t>(settings_.render_interval) == 0) {
      record(phase::kRender);
      scene_->render();
    }
    record(phase::kUpdateScene);
    scene_->update_buffers();
  }

  record(phase::kCounters);
  for (auto& k : episode_steps_) ++k;
  ++total_steps_;

  StepResult r;
  r.terminated.assign(static_cast<std::size_t>(n), 0);
  r.truncated.assign(static_cast<std::size_t>(n), 0);
  record(phase::kTerminations);
  compute_terminations(r.terminated, r.extras);
  const int max_steps = settings_.max_episode_steps();
  VecX time_out = VecX::Zero(n);
  for (int e = 0; e < n; ++e) {
    if (episode_steps_[static_cast<std::size_t>(e)] >= max_steps) {
      r.truncated[static_cast<std::size_t>(e)] = 1;
      time_out(e) = 1.0;
    }
  }
  r.extras["time_out"] = time_out;

  record(phase::kRewards);
  r.reward = VecX::Zero(n);
  compute_rewards(r.reward, r.extras);

  std::vector<int> reset_ids;
  for (int e = 0; e < n; ++e) {
    if (r.terminated[static_cast<std::size_t>(e)] || r.truncated[static_cast<std::size_t>(e)]) reset_ids.push_back(e);
  }
  if (!reset_ids.empty()) reset_envs(reset_ids);

  record(phase::kCommands);
  update_commands(reset_ids, env_dt());
  record(phase::kIntervalEvents);
  interval_events();
  record(phase::kObservations);
  r.observations = compute_observations();
  return r;
}

void EnvBase::reset_envs(std::span<const int> env_ids) {
  record(phase::kResetCurriculum);
  reset_curriculum(env_ids);
  std::vector<dyn::ArticulationState> staged;
  staged.reserve(env_ids.size());
  for (const int e : env_ids) staged.push_back(scene_->default_state(e));
  record(phase::kResetEvents);
  reset_events(env_ids, staged);
  record(phase::kResetBuffers);
  for (const int e : env_ids) {
    scene_->reset_buffers(e);
    episode_steps_[static_cast<std::size_t>(e)] = 0;
  }
  reset_buffers(env_ids);
  record(phase::kResetWrite);
  for (std::size_t k = 0; k < env_ids.size(); ++k) scene_->write_state(env_ids[k], staged[k]);
  record(phase::kResetSensors);
  for (const int e : env_ids) scene_->force_sensor_update(e);
}

// ---------------------------------------------------------------------------
// Direct workflow

DirectEnv::DirectEnv(EnvSettings settings, SceneSpec scene, DirectHooks hooks)
    : EnvBase(settings, std::move(scene)), hooks_(std::move(hooks)) {
  if (hooks_.action_dim < 0) throw InvalidArgument("action_dim must be >= 0");
  if (!hooks_.pre_physics) throw InvalidArgument("direct env needs a pre_physics hook");
  if (!hooks_.observe) throw InvalidArgument("direct env needs an observe hook");
  if (hooks_.setup) guarded("setup", [&] { hooks_.setup(*this); });
}

template <typename F>
void DirectEnv::guarded(const char* hook, F&& f) {
  try {
    f();
  } catch (const DivergenceError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string("direct hook '") + hook + "' failed at env step " + std::to_string(total_steps()) +
                ": " + e.what());
  }
}

void DirectEnv::process_actions(const MatX& actions) {
  guarded("pre_physics", [&] { hooks_.pre_physics(*this, actions); });
}

void DirectEnv::compute_terminations(Flags& terminated, Extras& extras) {
  pending_.reward = VecX::Zero(env_count());
  pending_.terminated.assign(static_cast<std::size_t>(env_count()), 0);
  pending_.extras.clear();
  if (hooks_.post_physics) guarded("post_physics", [&] { hooks_.post_physics(*this, pending_); });
  if (pending_.reward.size() != env_count() || pending_.terminated.size() != terminated.size()) {
    throw Error("direct hook 'post_physics' resized its outputs");
  }
  terminated = pending_.terminated;
  for (auto& [k, v] : pending_.extras) extras[k] = v;
}

void DirectEnv::compute_rewards(VecX& reward, Extras&) { reward = pending_.reward; }

void DirectEnv::reset_events(std::span<const int> env_ids, std::vector<dyn::ArticulationState>& staged) {
  if (hooks_.reset) guarded("reset", [&] { hooks_.reset(*this, env_ids, staged); });
}

ObsGroups DirectEnv::compute_observations() {
  ObsGroups obs;
  guarded("observe", [&] { obs = hooks_.observe(*this); });
  return obs;
}

}  // namespace batchlab::env
