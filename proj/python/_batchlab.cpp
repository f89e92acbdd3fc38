#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "batchlab/bench/bench.hpp"
#include "batchlab/core/error.hpp"
#include "batchlab/envman/config.hpp"
#include "batchlab/envman/env.hpp"
#include "batchlab/envman/managers.hpp"
#include "batchlab/envman/tasks.hpp"
#include "batchlab/pbt/pbt.hpp"

namespace py = pybind11;
using namespace batchlab;

namespace {

// Configs cross the boundary as JSON text; the Python layer handles dicts.
env::EnvConfig config_from_text(const std::string& text) { return env::parse_env_config(env::Json::parse(text)); }

py::dict step_to_dict(const env::StepResult& r) {
  py::dict out;
  out["observations"] = r.observations;
  out["reward"] = r.reward;
  out["terminated"] = std::vector<bool>(r.terminated.begin(), r.terminated.end());
  out["truncated"] = std::vector<bool>(r.truncated.begin(), r.truncated.end());
  out["extras"] = r.extras;
  return out;
}

std::unique_ptr<env::EnvBase> make_env(const std::string& config_text, const std::string& workflow) {
  const env::EnvConfig cfg = config_from_text(config_text);
  if (workflow == "manager") return env::make_manager_env(cfg);
  if (workflow == "direct") return env::make_direct_env(cfg);
  throw InvalidArgument("workflow must be 'manager' or 'direct', got '" + workflow + "'");
}

// Lets Python classes drive run_population. Every call takes the GIL.
class PyTrainable : public pbt::Trainable {
 public:
  using pbt::Trainable::Trainable;
  void train(int steps, const pbt::Hyperparameters& hp) override {
    PYBIND11_OVERRIDE_PURE(void, pbt::Trainable, train, steps, hp);
  }
  double evaluate() override { PYBIND11_OVERRIDE_PURE(double, pbt::Trainable, evaluate, ); }
  std::string save() const override { PYBIND11_OVERRIDE_PURE(std::string, pbt::Trainable, save, ); }
  // Blobs are opaque bytes on the Python side, not text.
  void load(const std::string& blob) override {
    py::gil_scoped_acquire gil;
    const py::function override = py::get_override(static_cast<const pbt::Trainable*>(this), "load");
    if (!override) throw InvalidArgument("Trainable subclass must implement load");
    override(py::bytes(blob));
  }
};

// Keeps the Python object alive for as long as C++ holds the trainable.
class HeldTrainable : public pbt::Trainable {
 public:
  explicit HeldTrainable(py::object obj) : obj_(std::move(obj)), impl_(obj_.cast<pbt::Trainable*>()) {}
  ~HeldTrainable() override {
    py::gil_scoped_acquire gil;
    obj_ = py::object();
  }
  void train(int steps, const pbt::Hyperparameters& hp) override { impl_->train(steps, hp); }
  double evaluate() override { return impl_->evaluate(); }
  std::string save() const override { return impl_->save(); }
  void load(const std::string& blob) override { impl_->load(blob); }

 private:
  py::object obj_;
  pbt::Trainable* impl_;
};

py::dict record_to_dict(const pbt::WorkerRecord& r) {
  py::list scores;
  for (const auto& s : r.scores) scores.append(py::make_tuple(s.generation, s.score));
  py::dict out;
  out["id"] = r.id;
  out["generation"] = r.generation;
  out["scores"] = scores;
  out["hyperparameters"] = r.hyperparameters;
  out["checkpoint"] = r.checkpoint;
  return out;
}

pbt::WorkerRecord record_from_dict(const py::dict& d) {
  pbt::WorkerRecord r;
  r.id = d["id"].cast<int>();
  r.generation = d.contains("generation") ? d["generation"].cast<int>() : 0;
  for (const auto& s : d["scores"]) {
    const auto pair = s.cast<std::pair<int, double>>();
    r.scores.push_back({pair.first, pair.second});
  }
  r.hyperparameters = d["hyperparameters"].cast<pbt::Hyperparameters>();
  return r;
}

pbt::PbtConfig pbt_config_from_dict(const py::dict& d) {
  pbt::PbtConfig c;
  if (d.contains("population")) c.population = d["population"].cast<int>();
  if (d.contains("interval")) c.interval = d["interval"].cast<int>();
  if (d.contains("replace_fraction")) c.replace_fraction = d["replace_fraction"].cast<double>();
  if (d.contains("mutation_probability")) c.mutation_probability = d["mutation_probability"].cast<double>();
  if (d.contains("mutation_factor")) c.mutation_factor = d["mutation_factor"].cast<double>();
  if (d.contains("bounds")) {
    for (const auto& [name, b] : d["bounds"].cast<std::map<std::string, std::pair<double, double>>>()) {
      c.bounds[name] = {b.first, b.second};
    }
  }
  c.validate();
  return c;
}

py::dict bench_record_to_dict(const bench::BenchRecord& r) {
  py::dict out;
  out["scenario"] = r.scenario;
  out["env_count"] = r.env_count;
  out["sensor"] = r.sensor;
  out["resolution"] = r.resolution;
  out["mesh_faces"] = r.mesh_faces;
  out["assets"] = r.assets;
  out["steps"] = r.steps;
  out["seconds"] = r.seconds;
  out["fps"] = r.fps;
  out["peak_mem"] = r.peak_mem;
  out["trajectory_hash"] = r.trajectory_hash;
  out["csv"] = bench::to_csv_row(r);
  return out;
}

}  // namespace

PYBIND11_MODULE(_batchlab, m) {
  m.doc() = "Native core of batchlab";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<DivergenceError>(m, "DivergenceError", error);
  py::register_exception<pbt::CheckpointError>(m, "CheckpointError", error);

  // Environments -----------------------------------------------------------
  m.def(
      "reference_config",
      [](const std::string& task, int env_count, std::uint64_t seed) {
        return env::to_json(env::reference_config(task, env_count, seed)).dump();
      },
      py::arg("task"), py::arg("env_count"), py::arg("seed") = 0);
  m.def(
      "normalize_config", [](const std::string& text) { return env::to_json(config_from_text(text)).dump(); },
      py::arg("config_json"), "Parses, validates and re-serializes a config with defaults filled in.");
  m.def("has_direct_variant", &env::has_direct_variant, py::arg("task"));

  py::class_<env::EnvBase>(m, "NativeEnv")
      .def(py::init(&make_env), py::arg("config_json"), py::arg("workflow") = "manager")
      .def(
          "reset",
          [](env::EnvBase& e, std::optional<std::vector<int>> ids) {
            return step_to_dict(ids ? e.reset(*ids) : e.reset());
          },
          py::arg("env_ids") = std::nullopt)
      .def(
          "step", [](env::EnvBase& e, const MatX& actions) { return step_to_dict(e.step(actions)); },
          py::arg("actions"))
      .def_property_readonly("action_dim", &env::EnvBase::action_dim)
      .def_property_readonly("env_count", &env::EnvBase::env_count)
      .def_property_readonly("env_dt", &env::EnvBase::env_dt)
      .def_property_readonly("total_steps", &env::EnvBase::total_steps)
      .def("episode_steps", &env::EnvBase::episode_steps, py::arg("env"))
      .def("set_trace", &env::EnvBase::set_trace, py::arg("enabled"))
      .def_property_readonly("trace", &env::EnvBase::trace)
      .def("clear_trace", &env::EnvBase::clear_trace);

  // Benchmarks ---------------------------------------------------------------
  m.def(
      "measure_fps",
      [](const std::string& scenario, int env_count, std::int64_t steps, std::int64_t warmup, std::uint64_t seed,
         double resolution, std::int64_t mesh_faces, int assets) {
        bench::ScenarioParams p;
        p.id = scenario;
        p.env_count = env_count;
        p.seed = seed;
        p.resolution = resolution;
        p.mesh_faces = mesh_faces;
        p.assets = assets;
        auto s = bench::make_scenario(p);
        return bench_record_to_dict(bench::measure_fps(*s, steps, warmup));
      },
      py::arg("scenario"), py::arg("env_count") = 16, py::arg("steps") = 20, py::arg("warmup") = 2,
      py::arg("seed") = 0, py::arg("resolution") = 0.1, py::arg("mesh_faces") = 20000, py::arg("assets") = 1);
  m.def(
      "compare_workflows",
      [](const std::string& task, const std::vector<int>& env_counts, std::int64_t steps, std::int64_t warmup,
         std::uint64_t seed) {
        py::list out;
        for (const auto& r : bench::compare_workflows(task, env_counts, steps, warmup, seed)) {
          py::dict d;
          d["task"] = r.task;
          d["env_count"] = r.env_count;
          d["fps_direct"] = r.fps_direct;
          d["fps_manager"] = r.fps_manager;
          d["overhead"] = r.overhead;
          d["trajectory_match"] = r.trajectory_match;
          out.append(d);
        }
        return out;
      },
      py::arg("task"), py::arg("env_counts"), py::arg("steps") = 20, py::arg("warmup") = 2, py::arg("seed") = 0);
  m.attr("CSV_HEADER") = bench::kCsvHeader;
  m.attr("WORKFLOW_CSV_HEADER") = bench::kWorkflowCsvHeader;

  // Population-based training -------------------------------------------------
  py::class_<pbt::Trainable, PyTrainable>(m, "Trainable")
      .def(py::init<>())
      .def("train", &pbt::Trainable::train, py::arg("steps"), py::arg("hyperparameters"))
      .def("evaluate", &pbt::Trainable::evaluate)
      .def("save", [](const pbt::Trainable& t) { return py::bytes(t.save()); })
      .def("load", &pbt::Trainable::load, py::arg("blob"));

  py::class_<pbt::NoisyQuadratic, pbt::Trainable>(m, "NoisyQuadratic")
      .def(py::init<int, double, double, double, std::uint64_t>(), py::arg("dim"), py::arg("h_min"),
           py::arg("h_max"), py::arg("noise"), py::arg("seed"))
      .def("loss", &pbt::NoisyQuadratic::loss);

  m.def(
      "pbt_decide",
      [](const std::vector<py::dict>& records, const py::dict& config, std::uint64_t seed) {
        std::vector<pbt::WorkerRecord> native;
        for (const auto& d : records) native.push_back(record_from_dict(d));
        py::list out;
        for (const auto& d : pbt::pbt_decide(native, pbt_config_from_dict(config), seed)) {
          py::dict o;
          o["worker"] = d.worker;
          o["exploit"] = d.kind == pbt::Directive::Kind::kExploit;
          o["source"] = d.source;
          o["hyperparameters"] = d.hyperparameters;
          out.append(o);
        }
        return out;
      },
      py::arg("records"), py::arg("config"), py::arg("seed"));

  m.def(
      "run_population",
      [](const py::function& factory, const py::dict& config, int steps, std::uint64_t seed,
         const std::filesystem::path& directory, const std::vector<pbt::Hyperparameters>& initial, bool resume) {
        pbt::RunOptions opts;
        opts.steps = steps;
        opts.seed = seed;
        opts.directory = directory;
        opts.initial = initial;
        opts.resume = resume;
        const pbt::TrainableFactory make = [&factory](int worker) -> std::unique_ptr<pbt::Trainable> {
          return std::make_unique<HeldTrainable>(factory(worker));
        };
        return record_to_dict(pbt::run_population(make, pbt_config_from_dict(config), opts));
      },
      py::arg("factory"), py::arg("config"), py::arg("steps"), py::arg("seed"), py::arg("directory"),
      py::arg("initial") = std::vector<pbt::Hyperparameters>{}, py::arg("resume") = true);
}
