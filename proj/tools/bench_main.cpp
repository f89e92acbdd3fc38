// Performance harness: FPS points, parameter sweeps and workflow comparison,
// written as CSV.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "batchlab/bench/bench.hpp"
#include "batchlab/core/error.hpp"

using namespace batchlab;
using namespace batchlab::bench;

namespace {

// Streams to stdout for "-", otherwise to a file opened on demand.
class Output {
 public:
  explicit Output(const std::string& target) {
    if (target != "-") {
      file_.open(target);
      if (!file_) throw Error("cannot open " + target + " for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<int> parse_counts(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw InvalidArgument("bad env count '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int report(const std::vector<BenchRecord>& records, const std::string& out) {
  Output o(out);
  write_csv(o.stream(), records);
  int failures = 0;
  for (const auto& r : records) {
    if (!r.error) continue;
    ++failures;
    std::cerr << "bench: " << r.scenario << " failed: " << r.message << '\n';
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Throughput benchmarks for batched environments and sensors"};
  app.require_subcommand(1);

  ScenarioParams params;
  std::int64_t steps = 100;
  std::int64_t warmup = 5;
  std::string out = "-";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--envs", params.env_count, "Environment count")->check(CLI::PositiveNumber);
    cmd->add_option("--steps", steps, "Timed steps")->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", warmup, "Untimed steps before timing")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", params.seed, "Master seed");
    cmd->add_option("--out", out, "CSV destination, - for stdout");
  };
  auto add_sensor = [&](CLI::App* cmd) {
    cmd->add_option("--resolution", params.resolution, "Raycaster grid spacing (m)");
    cmd->add_option("--mesh-faces", params.mesh_faces, "Raycaster terrain faces");
    cmd->add_option("--assets", params.assets, "Raycaster obstacle meshes");
  };

  auto* fps_cmd = app.add_subcommand("fps", "Measure one scenario");
  fps_cmd->add_option("--scenario", params.id, "Scenario id")->required();
  add_common(fps_cmd);
  add_sensor(fps_cmd);

  SweepSpec sweep;
  std::string axis;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one parameter");
  sweep_cmd->add_option("--axis", axis, "env_count, resolution, asset_count, mesh_faces or workflow")->required();
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--reps", sweep.repetitions, "Repetitions per value")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--scenario", params.id, "Base scenario id");
  add_common(sweep_cmd);
  add_sensor(sweep_cmd);

  std::string task = "cartpole";
  std::string env_list = "64";
  auto* wf_cmd = app.add_subcommand("workflows", "Compare direct and manager workflows");
  wf_cmd->add_option("--task", task, "Task with both workflow variants");
  wf_cmd->add_option("--envs", env_list, "Comma-separated env counts");
  wf_cmd->add_option("--steps", steps, "Timed steps")->check(CLI::PositiveNumber);
  wf_cmd->add_option("--warmup", warmup, "Untimed steps before timing")->check(CLI::NonNegativeNumber);
  wf_cmd->add_option("--seed", params.seed, "Master seed");
  wf_cmd->add_option("--out", out, "CSV destination, - for stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fps_cmd) {
      BenchRecord r;
      try {
        auto scenario = make_scenario(params);
        r = measure_fps(*scenario, steps, warmup);
      } catch (const Error& e) {
        r.scenario = params.id;
        r.env_count = params.env_count;
        r.error = true;
        r.message = e.what();
      }
      return report({r}, out);
    }
    if (*sweep_cmd) {
      sweep.axis = sweep_axis_from_string(axis);
      sweep.steps = steps;
      sweep.warmup = warmup;
      return report(run_sweep(sweep, params), out);
    }
    const auto records = compare_workflows(task, parse_counts(env_list), steps, warmup, params.seed);
    Output o(out);
    write_workflow_csv(o.stream(), records);
    for (const auto& r : records) {
      if (!r.trajectory_match) {
        std::cerr << "bench: " << r.task << " at " << r.env_count << " envs: workflow trajectories differ\n";
        return 1;
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return 2;
  }
}
