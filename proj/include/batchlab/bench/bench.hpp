#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace batchlab::bench {

/// One measured point. fps = env_count * steps / seconds, counting
/// simulation only (learning time is zero here).
struct BenchRecord {
  std::string scenario;
  int env_count = 0;
  std::string sensor;      // "none", "height_scanner"
  std::string resolution;  // grid spacing, blank when not applicable
  std::int64_t mesh_faces = 0;
  int assets = 0;
  std::int64_t steps = 0;  // timed steps, warmup excluded
  double seconds = 0.0;
  double fps = 0.0;
  std::optional<std::int64_t> peak_mem;  // bytes, best-effort
  std::uint64_t trajectory_hash = 0;     // not part of the CSV
  bool error = false;
  std::string message;  // error rows only
};

/// Throws InvalidArgument unless steps > 0 and seconds > 0.
double fps(int env_count, std::int64_t steps, double seconds);

inline constexpr const char* kCsvHeader =
    "scenario,env_count,sensor,resolution,mesh_faces,assets,steps,seconds,fps,peak_mem";

/// Locale-independent row. Error rows carry "<scenario>:error" and leave
/// steps, seconds, fps and peak_mem blank.
std::string to_csv_row(const BenchRecord& record);
void write_csv(std::ostream& out, const std::vector<BenchRecord>& records);

/// Peak resident set of this process in bytes, if the platform reports it.
std::optional<std::int64_t> peak_memory_bytes();

struct ScenarioParams {
  std::string id = "cartpole";
  int env_count = 16;
  double resolution = 0.1;          // raycaster grid spacing
  std::int64_t mesh_faces = 20000;  // raycaster terrain faces (approximate)
  int assets = 1;                   // raycaster obstacle meshes
  std::uint64_t seed = 0;
};

/// A steppable workload. `step_count` is the instrumented counter of every
/// step taken, warmup included.
class Scenario {
 public:
  virtual ~Scenario() = default;
  virtual void step() = 0;
  /// FNV-1a over every step's outputs so far.
  virtual std::uint64_t trajectory_hash() const = 0;
  virtual BenchRecord describe() const = 0;
  std::int64_t step_count() const { return steps_; }

 protected:
  std::int64_t steps_ = 0;
};

/// Scenario ids: "cartpole", "hopper", "reacher" (manager workflow),
/// "cartpole-direct", "hopper-direct", and "raycaster" (height-scanner grid
/// per env over a terrain mesh plus `assets` obstacle spheres). Throws
/// ConfigError for an unknown id.
std::unique_ptr<Scenario> make_scenario(const ScenarioParams& params);

/// Runs `warmup` untimed steps, then times `steps` steps.
BenchRecord measure_fps(Scenario& scenario, std::int64_t steps, std::int64_t warmup);

enum class SweepAxis { kEnvCount, kResolution, kAssetCount, kMeshFaces, kWorkflow };
SweepAxis sweep_axis_from_string(const std::string& name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kEnvCount;
  std::vector<std::string> values;  // parsed per axis; scenario ids for kWorkflow
  int repetitions = 1;
  std::int64_t steps = 20;
  std::int64_t warmup = 2;
};

/// One record per (value, repetition), in order. A failing point becomes an
/// error row and the sweep continues.
std::vector<BenchRecord> run_sweep(const SweepSpec& spec, const ScenarioParams& base);

struct WorkflowRecord {
  std::string task;
  int env_count = 0;
  double fps_direct = 0.0;
  double fps_manager = 0.0;
  double overhead = 0.0;  // (fps_direct - fps_manager) / fps_direct
  bool trajectory_match = false;
};

inline constexpr const char* kWorkflowCsvHeader = "task,env_count,fps_direct,fps_manager,overhead,trajectory_match";
void write_workflow_csv(std::ostream& out, const std::vector<WorkflowRecord>& records);

/// Times both workflows of `task` under the same seed and action stream.
/// Throws ConfigError if the task lacks a direct variant.
std::vector<WorkflowRecord> compare_workflows(const std::string& task, const std::vector<int>& env_counts,
                                              std::int64_t steps, std::int64_t warmup, std::uint64_t seed);

}  // namespace batchlab::bench
