#include "batchlab/pbt/pbt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "batchlab/core/seed.hpp"

namespace batchlab::pbt {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

constexpr const char* kMagic = "batchlab-ckpt-1";

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Write-then-rename: the final name only ever refers to a complete file.
void atomic_write(const fs::path& path, const std::string& bytes, const std::function<void()>& before_rename) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  if (before_rename) before_rename();
  fs::rename(tmp, path);
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json record_to_json(const WorkerRecord& r) {
  Json scores = Json::array();
  for (const auto& s : r.scores) scores.push_back({s.generation, s.score});
  return Json{{"worker", r.id},
              {"generation", r.generation},
              {"scores", scores},
              {"hyperparameters", r.hyperparameters},
              {"checkpoint", r.checkpoint}};
}

WorkerRecord record_from_json(const Json& j) {
  WorkerRecord r;
  r.id = j.at("worker").get<int>();
  r.generation = j.at("generation").get<int>();
  for (const auto& s : j.at("scores")) r.scores.push_back({s.at(0).get<int>(), s.at(1).get<double>()});
  r.hyperparameters = j.at("hyperparameters").get<Hyperparameters>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  return r;
}

// Rank order: best first; ties go to the lower id.
std::vector<std::size_t> rank(const std::vector<WorkerRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = records[a].latest_score();
    const double sb = records[b].latest_score();
    if (sa != sb) return sa > sb;
    return records[a].id < records[b].id;
  });
  return order;
}

void check_bounds(const Hyperparameters& hp, const PbtConfig& config, int worker) {
  for (const auto& [name, v] : hp) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("worker " + std::to_string(worker) + ": hyperparameter '" + name + "' must be positive");
    }
    const auto it = config.bounds.find(name);
    if (it != config.bounds.end() && (v < it->second.lo || v > it->second.hi)) {
      throw InvalidArgument("worker " + std::to_string(worker) + ": hyperparameter '" + name + "' out of bounds");
    }
  }
}

}  // namespace

double WorkerRecord::latest_score() const {
  if (scores.empty()) throw InvalidArgument("worker " + std::to_string(id) + " has no score");
  return scores.back().score;
}

int PbtConfig::replace_count() const {
  return static_cast<int>(std::floor(replace_fraction * population + 1e-12));
}

void PbtConfig::validate() const {
  if (population < 1) throw InvalidArgument("population must be >= 1");
  if (interval < 1) throw InvalidArgument("interval must be >= 1");
  if (!(replace_fraction > 0.0 && replace_fraction <= 0.5)) throw InvalidArgument("replace fraction must be in (0, 0.5]");
  if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0)) {
    throw InvalidArgument("mutation probability must be in [0, 1]");
  }
  if (!(mutation_factor > 1.0)) throw InvalidArgument("mutation factor must be > 1");
  for (const auto& [name, b] : bounds) {
    if (!(b.lo > 0.0 && b.lo <= b.hi)) throw InvalidArgument("bounds of '" + name + "' must satisfy 0 < lo <= hi");
  }
}

std::vector<Directive> pbt_decide(const std::vector<WorkerRecord>& records, const PbtConfig& config,
                                  std::uint64_t seed) {
  config.validate();
  if (records.size() < 2) throw InvalidArgument("pbt_decide needs at least two workers");
  int newest = 0;
  for (const auto& r : records) newest = std::max(newest, r.generation);
  for (const auto& r : records) {
    if (r.scores.empty() || r.scores.back().generation != newest) {
      throw InvalidArgument("worker " + std::to_string(r.id) + " has no score at generation " +
                            std::to_string(newest));
    }
  }

  const auto order = rank(records);
  const int n = static_cast<int>(records.size());
  const int k = std::min(static_cast<int>(std::floor(config.replace_fraction * n + 1e-12)), n / 2);

  std::vector<Directive> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[i].worker = records[i].id;

  std::mt19937_64 rng(seed);
  const double log_mu = std::log(config.mutation_factor);
  // Worst first, so the draw sequence does not depend on the record order.
  for (int b = 0; b < k; ++b) {
    const std::size_t target = order[static_cast<std::size_t>(n - 1 - b)];
    const std::size_t source =
        order[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, k - 1)(rng))];
    Hyperparameters hp = records[source].hyperparameters;
    for (auto& [name, v] : hp) {
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= config.mutation_probability) continue;
      v *= std::exp(std::uniform_real_distribution<double>(-log_mu, log_mu)(rng));
      const auto it = config.bounds.find(name);
      if (it != config.bounds.end()) v = std::clamp(v, it->second.lo, it->second.hi);
    }
    Directive& d = out[target];
    d.kind = Directive::Kind::kExploit;
    d.source = records[source].id;
    d.hyperparameters = std::move(hp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint exchange

CheckpointStore::CheckpointStore(fs::path root, int read_retries) : root_(std::move(root)), retries_(read_retries) {
  if (retries_ < 0) throw InvalidArgument("read retries must be >= 0");
}

fs::path CheckpointStore::checkpoint_path(int worker, int generation) const {
  return root_ / "pop" / std::to_string(worker) / (std::to_string(generation) + ".ckpt");
}

fs::path CheckpointStore::meta_path(int worker, int generation) const {
  return root_ / "pop" / std::to_string(worker) / (std::to_string(generation) + ".meta");
}

void CheckpointStore::write(const WorkerRecord& record, const std::string& blob) {
  std::ostringstream payload;
  payload << kMagic << '\n' << blob.size() << '\n' << fnv1a(blob) << '\n' << blob;
  const int w = record.id;
  const int g = record.generation;
  auto hook = [&] {
    if (hook_) hook_(w, g);
  };
  // Checkpoint before meta: a meta file implies its checkpoint exists.
  atomic_write(checkpoint_path(w, g), payload.str(), hook);
  atomic_write(meta_path(w, g), record_to_json(record).dump(), nullptr);
}

std::string CheckpointStore::read_checkpoint(int worker, int generation) const {
  const fs::path path = checkpoint_path(worker, generation);
  std::optional<std::string> bytes;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    bytes = read_file(path);
    if (bytes) break;
    if (attempt < retries_) std::this_thread::sleep_for(std::chrono::milliseconds(5 * (attempt + 1)));
  }
  if (!bytes) {
    throw CheckpointError(worker, "checkpoint for generation " + std::to_string(generation) + " missing after " +
                                      std::to_string(retries_ + 1) + " attempts (" + path.string() + ")");
  }
  std::istringstream in(*bytes);
  std::string magic;
  std::size_t size = 0;
  std::uint64_t sum = 0;
  std::getline(in, magic);
  in >> size >> sum;
  in.get();
  if (magic != kMagic || !in) throw CheckpointError(worker, "malformed checkpoint header in " + path.string());
  std::string blob(size, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(size));
  if (static_cast<std::size_t>(in.gcount()) != size || fnv1a(blob) != sum) {
    throw CheckpointError(worker, "truncated or corrupt checkpoint " + path.string());
  }
  return blob;
}

WorkerRecord CheckpointStore::read_meta(int worker, int generation) const {
  const auto bytes = read_file(meta_path(worker, generation));
  if (!bytes) {
    throw CheckpointError(worker, "meta record for generation " + std::to_string(generation) + " missing");
  }
  try {
    return record_from_json(Json::parse(*bytes));
  } catch (const Json::exception& e) {
    throw CheckpointError(worker, std::string("malformed meta record: ") + e.what());
  }
}

bool CheckpointStore::complete(int worker, int generation) const {
  return fs::exists(checkpoint_path(worker, generation)) && fs::exists(meta_path(worker, generation));
}

std::optional<int> CheckpointStore::latest_complete_generation(int population) const {
  std::optional<int> newest;
  for (int w = 0; w < population; ++w) {
    const fs::path dir = root_ / "pop" / std::to_string(w);
    if (!fs::is_directory(dir)) return std::nullopt;
    std::optional<int> worker_newest;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.path().extension() != ".meta") continue;  // skips *.tmp
      int g = 0;
      try {
        g = std::stoi(name);
      } catch (const std::exception&) {
        continue;
      }
      if (complete(w, g) && (!worker_newest || g > *worker_newest)) worker_newest = g;
    }
    if (!worker_newest) return std::nullopt;
    newest = newest ? std::min(*newest, *worker_newest) : *worker_newest;
  }
  // Generations are written in order, so every worker has `newest`.
  return newest;
}

// ---------------------------------------------------------------------------
// Orchestration

WorkerRecord run_population(const TrainableFactory& factory, const PbtConfig& config, const RunOptions& options) {
  config.validate();
  if (options.steps < config.interval) throw InvalidArgument("steps must cover at least one interval");
  if (options.directory.empty()) throw InvalidArgument("run_population needs a checkpoint directory");
  if (!options.initial.empty() && static_cast<int>(options.initial.size()) != config.population) {
    throw InvalidArgument("initial hyperparameters must list every worker");
  }
  const int n = config.population;
  const int generations = options.steps / config.interval;

  CheckpointStore store(options.directory);
  store.set_write_hook(options.write_hook);

  std::vector<std::unique_ptr<Trainable>> workers;
  std::vector<WorkerRecord> records(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w) workers.push_back(factory(w));

  // Exploit/explore after generation g; replays identically on resume.
  // Generation 0 is unscored, so nothing is decided there.
  auto decide = [&](int g) {
    if (n < 2 || g < 1 || g >= generations) return;
    const auto directives = pbt_decide(records, config, derive_seed(options.seed, 1000 + static_cast<std::uint64_t>(g)));
    for (const auto& d : directives) {
      if (d.kind != Directive::Kind::kExploit) continue;
      auto& r = records[static_cast<std::size_t>(d.worker)];
      workers[static_cast<std::size_t>(d.worker)]->load(store.read_checkpoint(d.source, g));
      r.hyperparameters = d.hyperparameters;
      r.checkpoint = store.checkpoint_path(d.source, g).string();
    }
  };

  int start = 0;
  const auto resume_gen = options.resume ? store.latest_complete_generation(n) : std::nullopt;
  if (resume_gen) {
    start = std::min(*resume_gen, generations);
    for (int w = 0; w < n; ++w) {
      auto& r = records[static_cast<std::size_t>(w)];
      r = store.read_meta(w, start);
      workers[static_cast<std::size_t>(w)]->load(store.read_checkpoint(w, start));
    }
    decide(start);
  } else {
    std::mt19937_64 rng(derive_seed(options.seed, 1));
    for (int w = 0; w < n; ++w) {
      auto& r = records[static_cast<std::size_t>(w)];
      r.id = w;
      if (!options.initial.empty()) {
        r.hyperparameters = options.initial[static_cast<std::size_t>(w)];
      } else {
        for (const auto& [name, b] : config.bounds) {
          r.hyperparameters[name] =
              std::exp(std::uniform_real_distribution<double>(std::log(b.lo), std::log(b.hi))(rng));
        }
      }
      check_bounds(r.hyperparameters, config, w);
      r.checkpoint = store.checkpoint_path(w, 0).string();
      store.write(r, workers[static_cast<std::size_t>(w)]->save());
    }
  }

  for (int g = start + 1; g <= generations; ++g) {
    for (int w = 0; w < n; ++w) {
      auto& r = records[static_cast<std::size_t>(w)];
      auto& worker = *workers[static_cast<std::size_t>(w)];
      worker.train(config.interval, r.hyperparameters);
      r.generation = g;
      r.scores.push_back({g, worker.evaluate()});
      r.checkpoint = store.checkpoint_path(w, g).string();
      store.write(r, worker.save());
    }
    decide(g);
  }

  // Report the records as scored, before the last decision's replacements.
  std::vector<WorkerRecord> final_records;
  for (int w = 0; w < n; ++w) final_records.push_back(store.read_meta(w, generations));
  return final_records[rank(final_records).front()];
}

// ---------------------------------------------------------------------------
// Synthetic objective

NoisyQuadratic::NoisyQuadratic(int dim, double h_min, double h_max, double noise, std::uint64_t seed)
    : noise_(noise), rng_(seed) {
  if (dim < 1) throw InvalidArgument("dimension must be >= 1");
  if (!(h_min > 0.0 && h_min <= h_max)) throw InvalidArgument("curvatures must satisfy 0 < h_min <= h_max");
  if (!(noise >= 0.0)) throw InvalidArgument("noise must be >= 0");
  for (int i = 0; i < dim; ++i) {
    const double t = dim == 1 ? 0.0 : static_cast<double>(i) / (dim - 1);
    h_.push_back(h_min * std::pow(h_max / h_min, t));
    x_.push_back(1.0);
  }
}

void NoisyQuadratic::train(int steps, const Hyperparameters& hp) {
  const double lr = hp.at("lr");
  constexpr double kCap = 1e100;  // keeps a diverging run finite
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double g = h_[i] * x_[i] + noise_ * std::normal_distribution<double>(0.0, 1.0)(rng_);
      x_[i] = std::clamp(x_[i] - lr * g, -kCap, kCap);
    }
  }
}

double NoisyQuadratic::loss() const {
  double f = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) f += 0.5 * h_[i] * x_[i] * x_[i];
  return f;
}

double NoisyQuadratic::evaluate() {
  const double f = loss();
  if (!std::isfinite(f)) return std::numeric_limits<double>::lowest();
  return -std::log10(std::max(f, 1e-300));
}

std::string NoisyQuadratic::save() const {
  std::ostringstream out;
  out.precision(17);
  out << x_.size();
  for (const double v : x_) out << ' ' << v;
  out << '\n' << rng_;
  return out.str();
}

void NoisyQuadratic::load(const std::string& blob) {
  std::istringstream in(blob);
  std::size_t n = 0;
  in >> n;
  if (!in || n != x_.size()) throw InvalidArgument("checkpoint dimension mismatch");
  std::vector<double> x(n);
  for (auto& v : x) in >> v;
  std::mt19937_64 rng;
  in >> rng;
  if (!in) throw InvalidArgument("malformed noisy-quadratic checkpoint");
  x_ = std::move(x);
  rng_ = rng;
}

}  // namespace batchlab::pbt
