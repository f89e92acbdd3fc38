#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "batchlab/envman/config.hpp"
#include "batchlab/envman/env.hpp"

namespace batchlab::env {

class ManagerEnv;

using ObservationFn = std::function<MatX(ManagerEnv&)>;  // (env_count x dim)
using RewardFn = std::function<VecX(ManagerEnv&)>;       // unweighted value per env
using TerminationFn = std::function<Flags(ManagerEnv&)>;
using CurriculumFn = std::function<void(ManagerEnv&, std::span<const int>)>;

/// Maps a slice of the action batch onto joint commands.
class ActionTerm {
 public:
  virtual ~ActionTerm() = default;
  virtual int dim() const = 0;
  /// Once per env step with this term's (env_count x dim) slice.
  virtual void process(ManagerEnv& env, const MatX& actions) = 0;
  /// Every physics substep, before the actuator models.
  virtual void apply(ManagerEnv& /*env*/) {}
  virtual void reset(ManagerEnv& /*env*/, std::span<const int> /*env_ids*/) {}
};

/// Function ids available to configs. Factories bind term parameters at
/// construction; an id missing here is a ConfigError.
struct TermLibrary {
  std::map<std::string, std::function<ObservationFn(const Json&, const Scene&)>> observations;
  std::map<std::string, std::function<RewardFn(const Json&, const Scene&)>> rewards;
  std::map<std::string, std::function<TerminationFn(const Json&, const Scene&)>> terminations;
  std::map<std::string, std::function<std::unique_ptr<ActionTerm>(const Json&, const Scene&)>> actions;
  std::map<std::string, std::function<CurriculumFn(const Json&, const Scene&)>> curriculum;

  /// Robot-agnostic terms (joint state, efforts, heights, commands, ...).
  static TermLibrary common();
  /// Adds `other`'s entries; duplicates throw InvalidArgument.
  void merge(const TermLibrary& other);
};

// ---------------------------------------------------------------------------
// Automatic domain randomization

struct AdrRange {
  std::string event;
  Range initial;
  Range maximal;
  Range current;
  double step = 0.0;
};

struct AdrState {
  std::vector<AdrRange> ranges;
  double widen_threshold = 0.0;
  double narrow_threshold = 0.0;

  static AdrState from_spec(const AdrSpec& spec);
  /// Throws InvalidArgument unless narrow < widen and every current range
  /// lies inside its maximal range.
  void validate() const;
};

/// Performance >= widen: every range grows one step toward maximal.
/// Performance <= narrow: every range shrinks one step toward initial.
AdrState adr_update(AdrState state, double performance);

// ---------------------------------------------------------------------------
// Manager-based environment

/// Environment assembled from declarative terms. Reward = sum of
/// weight * term * env_dt; per-term contributions go to extras under
/// "reward/<name>" with running episode sums under "episode/<name>", and
/// termination causes under "termination/<name>".
class ManagerEnv : public EnvBase {
 public:
  ManagerEnv(const EnvConfig& config, SceneSpec scene, const TermLibrary& library);
  ~ManagerEnv() override;

  int action_dim() const override { return action_dim_; }

  /// Latest and previous action batches (rows zeroed on reset).
  const MatX& actions() const { return actions_; }
  const MatX& previous_actions() const { return previous_actions_; }
  /// Termination flags of the current step (before resets).
  const Flags& terminated_now() const { return terminated_now_; }

  const MatX& command(const std::string& name) const;
  std::int64_t command_resamples(const std::string& name) const;

  const EventTermSpec& event(const std::string& name) const;
  void set_event_range(const std::string& name, Range range);
  /// Fires `name` on `env_ids` immediately (state parameters write through).
  void apply_event(const std::string& name, std::span<const int> env_ids);
  std::int64_t event_fire_count(const std::string& name) const;

  const AdrState* adr() const { return adr_ ? &*adr_ : nullptr; }
  void update_adr(double performance);

  const VecX& episode_sum(const std::string& reward_term) const;

 protected:
  void process_actions(const MatX& actions) override;
  void apply_actions() override;
  void compute_terminations(Flags& terminated, Extras& extras) override;
  void compute_rewards(VecX& reward, Extras& extras) override;
  void reset_curriculum(std::span<const int> env_ids) override;
  void reset_events(std::span<const int> env_ids, std::vector<dyn::ArticulationState>& staged) override;
  void reset_buffers(std::span<const int> env_ids) override;
  void update_commands(std::span<const int> reset_ids, double elapsed) override;
  void interval_events() override;
  ObsGroups compute_observations() override;

 private:
  struct ObservationTerm {
    ObservationTermSpec spec;
    ObservationFn fn;
  };
  struct RewardTerm {
    RewardTermSpec spec;
    RewardFn fn;
    VecX episode;  // weighted running sum
  };
  struct TerminationTerm {
    TermSpec spec;
    TerminationFn fn;
  };
  struct EventTerm {
    EventTermSpec spec;
    std::vector<int> envs;     // resolved from the asset pattern, ascending
    std::vector<int> targets;  // resolved link / dof / actuator indices
    VecX time_left;            // interval mode
    std::int64_t fired = 0;
  };
  struct CommandTerm {
    CommandTermSpec spec;
    MatX values;
    VecX timers;
    std::int64_t resamples = 0;
  };

  EventTerm& find_event(const std::string& name);
  const EventTerm& find_event(const std::string& name) const;
  const CommandTerm& find_command(const std::string& name) const;
  void fire(EventTerm& term, std::span<const int> env_ids, std::vector<dyn::ArticulationState>* staged);
  void resample_command(CommandTerm& term, int env);

  int action_dim_ = 0;
  std::vector<std::unique_ptr<ActionTerm>> action_terms_;
  MatX actions_;
  MatX previous_actions_;
  Flags terminated_now_;
  std::map<std::string, std::vector<ObservationTerm>> observation_groups_;
  std::vector<RewardTerm> reward_terms_;
  std::vector<TerminationTerm> termination_terms_;
  std::vector<EventTerm> event_terms_;
  std::vector<CommandTerm> command_terms_;
  std::vector<CurriculumFn> curriculum_terms_;
  std::optional<AdrState> adr_;
};

}  // namespace batchlab::env
