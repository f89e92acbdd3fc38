#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "batchlab/core/error.hpp"

namespace batchlab::pbt {

using Hyperparameters = std::map<std::string, double>;  // named positive reals

struct ScoreSample {
  int generation = 0;  // timestamp: generations are the population clock
  double score = 0.0;
};

struct WorkerRecord {
  int id = 0;
  std::vector<ScoreSample> scores;  // strictly increasing generation
  Hyperparameters hyperparameters;
  std::string checkpoint;  // path of the latest complete checkpoint
  int generation = 0;

  /// Throws InvalidArgument if there is no score yet.
  double latest_score() const;
};

struct Bound {
  double lo = 0.0;
  double hi = 0.0;
};

struct PbtConfig {
  int population = 8;
  int interval = 10;  // training steps between decisions
  double replace_fraction = 0.25;
  double mutation_probability = 0.5;
  double mutation_factor = 1.25;  // mu > 1; factors are log-uniform in [1/mu, mu]
  std::map<std::string, Bound> bounds;

  /// Number of exploit directives per decision: floor(p * P).
  int replace_count() const;
  void validate() const;
};

struct Directive {
  enum class Kind { kKeep, kExploit };
  Kind kind = Kind::kKeep;
  int worker = 0;
  int source = -1;                  // exploit only
  Hyperparameters hyperparameters;  // exploit only: mutated copy of the source's
};

/// One directive per record, in record order. Ranks by latest score
/// (descending, ties to the lower id); the bottom floor(p*P) exploit a
/// source drawn uniformly from the top floor(p*P). Pure in (records, config,
/// seed). Throws InvalidArgument for fewer than two workers or a record
/// without a score at the newest generation.
std::vector<Directive> pbt_decide(const std::vector<WorkerRecord>& records, const PbtConfig& config,
                                  std::uint64_t seed);

/// Training task driven by the orchestrator. State must round-trip through
/// save/load exactly, including any internal randomness.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual void train(int steps, const Hyperparameters& hp) = 0;
  /// Higher is better.
  virtual double evaluate() = 0;
  virtual std::string save() const = 0;
  virtual void load(const std::string& blob) = 0;
};

using TrainableFactory = std::function<std::unique_ptr<Trainable>(int worker_id)>;

/// Checkpoint read failure for a worker.
class CheckpointError : public Error {
 public:
  CheckpointError(int worker, const std::string& what)
      : Error("worker " + std::to_string(worker) + ": " + what), worker_(worker) {}
  int worker() const { return worker_; }

 private:
  int worker_;
};

/// Directory exchange `<root>/pop/<worker>/<generation>.ckpt` plus a
/// `<generation>.meta` JSON record (scores, hyperparameters). Every file is
/// written to a temporary name and renamed into place, so readers only see
/// complete files; checkpoint payloads carry a length and checksum as a
/// second line of defence.
class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path root, int read_retries = 3);

  std::filesystem::path checkpoint_path(int worker, int generation) const;
  std::filesystem::path meta_path(int worker, int generation) const;

  /// Called between the temporary write and the rename; throwing from it
  /// leaves a partial temporary file behind (fault injection).
  using WriteHook = std::function<void(int worker, int generation)>;
  void set_write_hook(WriteHook hook) { hook_ = std::move(hook); }

  void write(const WorkerRecord& record, const std::string& blob);
  /// Retries `read_retries` times on a missing file, then throws
  /// CheckpointError naming the worker. A corrupt payload throws at once.
  std::string read_checkpoint(int worker, int generation) const;
  WorkerRecord read_meta(int worker, int generation) const;
  bool complete(int worker, int generation) const;
  /// Newest generation complete for every worker in [0, population), if any.
  std::optional<int> latest_complete_generation(int population) const;

 private:
  std::filesystem::path root_;
  int retries_;
  WriteHook hook_;
};

struct RunOptions {
  int steps = 100;  // training steps per worker; generations = steps / interval
  std::uint64_t seed = 0;
  std::filesystem::path directory;
  /// Initial hyperparameters per worker; empty draws log-uniform in bounds.
  std::vector<Hyperparameters> initial;
  /// Resume from the newest complete generation found in `directory`.
  bool resume = true;
  CheckpointStore::WriteHook write_hook;
};

/// Interleaved population run. Each generation every worker trains
/// `interval` steps, is evaluated and checkpointed; then pbt_decide runs
/// (P >= 2) and exploiting workers load their source's checkpoint. Returns
/// the best record by latest score.
WorkerRecord run_population(const TrainableFactory& factory, const PbtConfig& config, const RunOptions& options);

/// Stochastic gradient descent on f(x) = 0.5 * sum_i h_i x_i^2 with
/// curvatures log-spaced in [h_min, h_max] and Gaussian gradient noise.
/// Hyperparameter "lr". Score is -log10 f (higher is better); a diverged
/// state scores the lowest finite double.
class NoisyQuadratic : public Trainable {
 public:
  NoisyQuadratic(int dim, double h_min, double h_max, double noise, std::uint64_t seed);

  void train(int steps, const Hyperparameters& hp) override;
  double evaluate() override;
  std::string save() const override;
  void load(const std::string& blob) override;

  double loss() const;

 private:
  std::vector<double> x_;
  std::vector<double> h_;
  double noise_;
  std::mt19937_64 rng_;
};

}  // namespace batchlab::pbt
