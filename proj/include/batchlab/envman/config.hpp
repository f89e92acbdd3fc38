#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace batchlab::env {

using Json = nlohmann::json;
using Range = std::pair<double, double>;

/// Timing and batch size shared by both workflows.
struct EnvSettings {
  int env_count = 1;
  double physics_dt = 0.005;
  int decimation = 1;       // physics substeps per env step
  int render_interval = 0;  // substeps between renders, 0 = never
  double episode_length = 5.0;
  std::uint64_t seed = 0;

  double env_dt() const { return physics_dt * decimation; }
  /// Env steps until truncation; an episode of exactly this many steps has
  /// reached its length.
  int max_episode_steps() const;
  void validate() const;
};

struct TermSpec {
  std::string name;
  std::string function;
  Json params = Json::object();
};

enum class NoiseKind { kNone, kGaussian, kUniform };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double magnitude = 0.0;  // sigma, or half-width b
};

struct ObservationTermSpec : TermSpec {
  NoiseSpec noise;
  std::optional<Range> clip;
  double scale = 1.0;
};

struct RewardTermSpec : TermSpec {
  double weight = 0.0;
};

enum class EventMode { kStartup, kReset, kInterval };
enum class EventOp { kAbsolute, kScale, kAdd };
enum class Distribution { kUniform, kLogUniform };

EventMode event_mode_from_string(const std::string& name);
EventOp event_op_from_string(const std::string& name);
Distribution distribution_from_string(const std::string& name);

struct EventTermSpec {
  std::string name;
  EventMode mode = EventMode::kReset;
  std::string parameter;  // mass, friction, gains, push_velocity, default_joint_pos, gravity, joint_pos, joint_vel
  std::string asset = "/World/envs/*/Robot";
  std::vector<std::string> targets;  // link, joint, or actuator names; empty = all
  Distribution distribution = Distribution::kUniform;
  Range range{0.0, 0.0};
  EventOp op = EventOp::kScale;
  Range interval{1.0, 1.0};  // seconds, interval mode

  void validate() const;
};

struct CommandTermSpec {
  std::string name;
  std::vector<Range> ranges;  // one per command component
  Range resampling_time{1.0, 1.0};

  void validate() const;
};

struct AdrParameterSpec {
  std::string event;
  Range initial{0.0, 0.0};
  Range maximal{0.0, 0.0};
  double step = 0.0;
};

struct AdrSpec {
  double widen_threshold = 0.0;
  double narrow_threshold = 0.0;
  std::vector<AdrParameterSpec> parameters;
};

struct ManagerSpec {
  std::vector<TermSpec> actions;
  std::map<std::string, std::vector<ObservationTermSpec>> observations;  // group -> terms
  std::vector<RewardTermSpec> rewards;
  std::vector<TermSpec> terminations;
  std::vector<EventTermSpec> events;
  std::vector<CommandTermSpec> commands;
  std::vector<TermSpec> curriculum;
  std::optional<AdrSpec> adr;
};

/// Complete environment description. `scene` is interpreted by the task's
/// scene builder (robot, actuators, terrain, sensors).
struct EnvConfig {
  std::string task;
  EnvSettings settings;
  Json scene = Json::object();
  ManagerSpec managers;
};

/// Strict parse: unknown keys and wrong types raise ConfigError naming the
/// offending path.
EnvConfig parse_env_config(const Json& document);
EnvConfig load_env_config(const std::string& path);
Json to_json(const EnvConfig& config);

/// Throws ConfigError if `object` has a key outside `allowed`.
void require_keys(const Json& object, const std::vector<std::string>& allowed,
                  const std::string& where);

}  // namespace batchlab::env
