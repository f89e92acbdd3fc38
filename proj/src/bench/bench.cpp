#include "batchlab/bench/bench.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "batchlab/core/error.hpp"
#include "batchlab/core/seed.hpp"
#include "batchlab/envman/tasks.hpp"
#include "batchlab/sensors/raycast.hpp"
#include "batchlab/terrain/terrain.hpp"

namespace batchlab::bench {

namespace {

// Shortest round-trip decimal form, independent of the global locale.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_resolution(double r) { return format_double(r); }

class Fnv1a {
 public:
  void add(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Hashes the trajectory part of a step tuple: observations, reward, flags
// and time_out. Manager-only term bookkeeping is excluded so both workflows
// hash alike.
void hash_step(Fnv1a& h, const env::StepResult& r) {
  for (const auto& [group, obs] : r.observations) {
    h.add(group.data(), group.size());
    h.add(obs.data(), static_cast<std::size_t>(obs.size()) * sizeof(double));
  }
  h.add(r.reward.data(), static_cast<std::size_t>(r.reward.size()) * sizeof(double));
  h.add(r.terminated.data(), r.terminated.size());
  h.add(r.truncated.data(), r.truncated.size());
  const auto it = r.extras.find("time_out");
  if (it != r.extras.end()) h.add(it->second.data(), static_cast<std::size_t>(it->second.size()) * sizeof(double));
}

class EnvScenario : public Scenario {
 public:
  EnvScenario(const ScenarioParams& p, const std::string& task, bool direct) : params_(p), rng_(derive_seed(p.seed, 7)) {
    const env::EnvConfig cfg = env::reference_config(task, p.env_count, p.seed);
    if (direct) {
      env_ = env::make_direct_env(cfg);
    } else {
      env_ = env::make_manager_env(cfg);
    }
    actions_.resize(p.env_count, env_->action_dim());
    hash_step(hash_, env_->reset());
  }

  void step() override {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index i = 0; i < actions_.size(); ++i) actions_.data()[i] = u(rng_);
    hash_step(hash_, env_->step(actions_));
    ++steps_;
  }

  std::uint64_t trajectory_hash() const override { return hash_.value(); }

  BenchRecord describe() const override {
    BenchRecord r;
    r.scenario = params_.id;
    r.env_count = params_.env_count;
    const auto& scene = env_->scene();
    r.sensor = scene.has_height_scanner() ? "height_scanner" : "none";
    if (scene.has_height_scanner()) r.resolution = format_resolution(scene.spec().height_scanner->resolution);
    if (const auto* t = scene.terrain()) r.mesh_faces = static_cast<std::int64_t>(t->mesh().face_count());
    r.assets = 1;
    return r;
  }

 private:
  ScenarioParams params_;
  std::unique_ptr<env::EnvBase> env_;
  std::mt19937_64 rng_;
  MatX actions_;
  Fnv1a hash_;
};

// Height-scanner grids sliding over a terrain mesh with obstacle spheres.
class RaycasterScenario : public Scenario {
 public:
  explicit RaycasterScenario(const ScenarioParams& p) : params_(p) {
    if (p.env_count < 1) throw InvalidArgument("raycaster needs at least one env");
    if (p.assets < 0) throw InvalidArgument("asset count must be >= 0");
    if (p.mesh_faces < 2) throw InvalidArgument("mesh faces must be >= 2");
    if (!(p.resolution > 0.0)) throw InvalidArgument("resolution must be > 0");
    // Two triangles per cell on an n x n cell grid.
    const int cells = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(p.mesh_faces) / 2.0))));
    const double cell = kSize / cells;
    const auto hf = terrain::hf_random_uniform(kSize, kSize, cell, 0.05, 0.005, derive_seed(p.seed, 1));
    sensors::TriMesh ground = terrain::hf_to_mesh(hf);
    faces_ = static_cast<std::int64_t>(ground.face_count());
    scene_.add(std::move(ground));

    std::mt19937_64 g(derive_seed(p.seed, 2));
    std::uniform_real_distribution<double> u(0.5, kSize - 0.5);
    const auto sphere = sensors::MeshGeometry::build(sensors::make_uv_sphere(0.3, 8, 12));
    for (int a = 0; a < p.assets; ++a) {
      scene_.add(sphere, Transform::from_translation(Vec3(u(g), u(g), 0.3)));
    }
    pattern_ = sensors::pattern_grid(1.6, 1.2, p.resolution);
    std::uniform_real_distribution<double> start(1.0, kSize - 1.0);
    for (int e = 0; e < p.env_count; ++e) starts_.emplace_back(start(g), start(g));
  }

  void step() override {
    rays_.clear();
    for (const auto& [x0, y0] : starts_) {
      // Each sensor drifts along x and wraps inside the field.
      const double x = 1.0 + std::fmod(x0 - 1.0 + 0.05 * static_cast<double>(steps_), kSize - 2.0);
      const auto placed = pattern_.place(Transform::from_translation(Vec3(x, y0, 2.0)));
      rays_.insert(rays_.end(), placed.begin(), placed.end());
    }
    const auto hits = sensors::raycast(scene_, rays_);
    for (const auto& h : hits) hash_.add(&h.distance, sizeof(double));
    ++steps_;
  }

  std::uint64_t trajectory_hash() const override { return hash_.value(); }

  BenchRecord describe() const override {
    BenchRecord r;
    r.scenario = params_.id;
    r.env_count = params_.env_count;
    r.sensor = "height_scanner";
    r.resolution = format_resolution(params_.resolution);
    r.mesh_faces = faces_;
    r.assets = params_.assets;
    return r;
  }

 private:
  static constexpr double kSize = 8.0;
  ScenarioParams params_;
  sensors::RaycastScene scene_;
  sensors::RayPattern pattern_;
  std::vector<std::pair<double, double>> starts_;
  std::vector<sensors::Ray> rays_;
  std::int64_t faces_ = 0;
  Fnv1a hash_;
};

double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument("bad " + what + " value '" + s + "'");
  }
  return v;
}

}  // namespace

double fps(int env_count, std::int64_t steps, double seconds) {
  if (steps <= 0) throw InvalidArgument("steps must be > 0");
  if (!(seconds > 0.0)) throw InvalidArgument("elapsed time must be > 0");
  return static_cast<double>(env_count) * static_cast<double>(steps) / seconds;
}

std::string to_csv_row(const BenchRecord& r) {
  std::string row = r.error ? r.scenario + ":error" : r.scenario;
  row += ',' + std::to_string(r.env_count) + ',' + r.sensor + ',' + r.resolution + ',' + std::to_string(r.mesh_faces) +
         ',' + std::to_string(r.assets) + ',';
  if (!r.error) {
    row += std::to_string(r.steps) + ',' + format_double(r.seconds) + ',' + format_double(r.fps) + ',';
    if (r.peak_mem) row += std::to_string(*r.peak_mem);
  } else {
    row += ",,,";
  }
  return row;
}

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) out << to_csv_row(r) << '\n';
}

std::optional<std::int64_t> peak_memory_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) != 0) continue;
    std::istringstream fields(line.substr(6));
    std::int64_t kib = 0;
    if (fields >> kib) return kib * 1024;
  }
  return std::nullopt;
}

std::unique_ptr<Scenario> make_scenario(const ScenarioParams& p) {
  if (p.env_count < 1) throw InvalidArgument("env count must be >= 1");
  if (p.id == "raycaster") return std::make_unique<RaycasterScenario>(p);
  std::string task = p.id;
  bool direct = false;
  const std::string suffix = "-direct";
  if (task.size() > suffix.size() && task.compare(task.size() - suffix.size(), suffix.size(), suffix) == 0) {
    task.resize(task.size() - suffix.size());
    direct = true;
  }
  if (task != "cartpole" && task != "hopper" && task != "reacher") {
    throw ConfigError("unknown scenario '" + p.id + "'");
  }
  if (direct && !env::has_direct_variant(task)) throw ConfigError("scenario '" + p.id + "' has no direct variant");
  return std::make_unique<EnvScenario>(p, task, direct);
}

BenchRecord measure_fps(Scenario& scenario, std::int64_t steps, std::int64_t warmup) {
  if (steps <= 0) throw InvalidArgument("steps must be > 0");
  if (warmup < 0) throw InvalidArgument("warmup must be >= 0");
  for (std::int64_t k = 0; k < warmup; ++k) scenario.step();
  const std::int64_t before = scenario.step_count();
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t k = 0; k < steps; ++k) scenario.step();
  const auto t1 = std::chrono::steady_clock::now();
  BenchRecord r = scenario.describe();
  r.steps = scenario.step_count() - before;
  r.seconds = std::chrono::duration<double>(t1 - t0).count();
  r.fps = fps(r.env_count, r.steps, r.seconds);
  r.peak_mem = peak_memory_bytes();
  r.trajectory_hash = scenario.trajectory_hash();
  return r;
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "env_count") return SweepAxis::kEnvCount;
  if (name == "resolution") return SweepAxis::kResolution;
  if (name == "asset_count") return SweepAxis::kAssetCount;
  if (name == "mesh_faces") return SweepAxis::kMeshFaces;
  if (name == "workflow") return SweepAxis::kWorkflow;
  throw InvalidArgument("unknown sweep axis '" + name + "'");
}

std::vector<BenchRecord> run_sweep(const SweepSpec& spec, const ScenarioParams& base) {
  if (spec.values.empty()) throw InvalidArgument("sweep needs at least one value");
  if (spec.repetitions < 1) throw InvalidArgument("repetitions must be >= 1");
  std::vector<BenchRecord> out;
  for (const auto& value : spec.values) {
    ScenarioParams p = base;
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      try {
        switch (spec.axis) {
          case SweepAxis::kEnvCount:
            p.env_count = static_cast<int>(parse_number(value, "env_count"));
            break;
          case SweepAxis::kResolution:
            p.resolution = parse_number(value, "resolution");
            break;
          case SweepAxis::kAssetCount:
            p.assets = static_cast<int>(parse_number(value, "asset_count"));
            break;
          case SweepAxis::kMeshFaces:
            p.mesh_faces = static_cast<std::int64_t>(parse_number(value, "mesh_faces"));
            break;
          case SweepAxis::kWorkflow:
            p.id = value;
            break;
        }
        auto scenario = make_scenario(p);
        out.push_back(measure_fps(*scenario, spec.steps, spec.warmup));
      } catch (const Error& e) {
        BenchRecord r;
        r.scenario = p.id;
        r.env_count = p.env_count;
        r.assets = p.assets;
        r.mesh_faces = p.mesh_faces;
        r.error = true;
        r.message = e.what();
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

void write_workflow_csv(std::ostream& out, const std::vector<WorkflowRecord>& records) {
  out << kWorkflowCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.task << ',' << r.env_count << ',' << format_double(r.fps_direct) << ',' << format_double(r.fps_manager)
        << ',' << format_double(r.overhead) << ',' << (r.trajectory_match ? "true" : "false") << '\n';
  }
}

std::vector<WorkflowRecord> compare_workflows(const std::string& task, const std::vector<int>& env_counts,
                                              std::int64_t steps, std::int64_t warmup, std::uint64_t seed) {
  if (!env::has_direct_variant(task)) throw ConfigError("task '" + task + "' has no direct variant");
  if (env_counts.empty()) throw InvalidArgument("workflow comparison needs at least one env count");
  std::vector<WorkflowRecord> out;
  for (const int n : env_counts) {
    ScenarioParams p;
    p.env_count = n;
    p.seed = seed;
    // Alternate the two variants twice and keep each one's best time, so
    // a transient stall does not land on one side only.
    WorkflowRecord w;
    w.task = task;
    w.env_count = n;
    std::uint64_t hash_direct = 0;
    std::uint64_t hash_manager = 0;
    for (int round = 0; round < 2; ++round) {
      p.id = task + "-direct";
      auto direct = make_scenario(p);
      const BenchRecord rd = measure_fps(*direct, steps, warmup);
      p.id = task;
      auto manager = make_scenario(p);
      const BenchRecord rm = measure_fps(*manager, steps, warmup);
      w.fps_direct = std::max(w.fps_direct, rd.fps);
      w.fps_manager = std::max(w.fps_manager, rm.fps);
      hash_direct = rd.trajectory_hash;
      hash_manager = rm.trajectory_hash;
    }
    w.overhead = (w.fps_direct - w.fps_manager) / w.fps_direct;
    w.trajectory_match = hash_direct == hash_manager;
    out.push_back(w);
  }
  return out;
}

}  // namespace batchlab::bench
