#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "batchlab/core/error.hpp"
#include "batchlab/pbt/pbt.hpp"
#include "pbt_fixtures.hpp"

using namespace batchlab;
using namespace batchlab::pbt;
using fixtures::ScratchDir;

namespace {

WorkerRecord scored(int id, double score, double lr = 0.01) {
  WorkerRecord r;
  r.id = id;
  r.generation = 1;
  r.scores.push_back({1, score});
  r.hyperparameters["lr"] = lr;
  return r;
}

PbtConfig config_for(int population, double p) {
  PbtConfig c;
  c.population = population;
  c.replace_fraction = p;
  c.bounds["lr"] = {1e-4, 1.0};
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// pbt_decide

TEST(PbtDecide, LowestExploitsHighest) {
  const std::vector<WorkerRecord> rs{scored(0, 1.0), scored(1, 2.0), scored(2, 3.0), scored(3, 4.0)};
  const auto d = pbt_decide(rs, config_for(4, 0.25), 7);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0].kind, Directive::Kind::kExploit);
  EXPECT_EQ(d[0].source, 3);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(d[static_cast<std::size_t>(i)].kind, Directive::Kind::kKeep);
}

TEST(PbtDecide, MutationWithinFactorBound) {
  PbtConfig c = config_for(2, 0.5);
  c.mutation_probability = 1.0;
  c.mutation_factor = 1.25;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto d = pbt_decide({scored(0, 1.0, 0.01), scored(1, 0.0, 0.5)}, c, seed);
    const double v = d[1].hyperparameters.at("lr");
    EXPECT_GE(v, 0.008 * (1 - 1e-12));
    EXPECT_LE(v, 0.0125 * (1 + 1e-12));
  }
}

TEST(PbtDecide, MutationClampedToBounds) {
  PbtConfig c = config_for(2, 0.5);
  c.mutation_probability = 1.0;
  c.mutation_factor = 4.0;
  c.bounds["lr"] = {0.009, 0.011};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const double v = pbt_decide({scored(0, 1.0, 0.01), scored(1, 0.0, 0.01)}, c, seed)[1].hyperparameters.at("lr");
    EXPECT_GE(v, 0.009);
    EXPECT_LE(v, 0.011);
  }
}

TEST(PbtDecide, EqualScoresTieBreakById) {
  std::vector<WorkerRecord> rs;
  for (int i = 0; i < 8; ++i) rs.push_back(scored(i, 5.0));
  const auto d = pbt_decide(rs, config_for(8, 0.25), 3);
  int replaced = 0;
  for (const auto& x : d) {
    if (x.kind != Directive::Kind::kExploit) continue;
    ++replaced;
    EXPECT_GE(x.worker, 6);
    EXPECT_LE(x.source, 1);
  }
  EXPECT_EQ(replaced, 2);
}

TEST(PbtDecide, PropertiesOnRandomPopulations) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 20)(g);
    const double p = std::uniform_real_distribution<double>(0.05, 0.5)(g);
    PbtConfig c = config_for(n, p);
    c.mutation_probability = 0.7;
    c.mutation_factor = 2.0;
    std::vector<WorkerRecord> rs;
    for (int i = 0; i < n; ++i) {
      rs.push_back(scored(i, std::uniform_real_distribution<double>(-1, 1)(g),
                          std::exp(std::uniform_real_distribution<double>(std::log(1e-4), 0.0)(g))));
    }
    const auto d = pbt_decide(rs, c, static_cast<std::uint64_t>(trial));
    std::set<int> targets;
    std::set<int> sources;
    for (const auto& x : d) {
      if (x.kind != Directive::Kind::kExploit) continue;
      targets.insert(x.worker);
      sources.insert(x.source);
      const double v = x.hyperparameters.at("lr");
      EXPECT_GE(v, 1e-4);
      EXPECT_LE(v, 1.0);
      EXPECT_LE(rs[static_cast<std::size_t>(x.worker)].latest_score(),
                rs[static_cast<std::size_t>(x.source)].latest_score());
    }
    EXPECT_EQ(static_cast<int>(targets.size()), static_cast<int>(std::floor(p * n + 1e-12)));
    for (const int s : sources) EXPECT_EQ(targets.count(s), 0u);
    // Purity: same inputs, same directives.
    const auto again = pbt_decide(rs, c, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_EQ(again[i].source, d[i].source);
      EXPECT_EQ(again[i].hyperparameters, d[i].hyperparameters);
    }
  }
}

TEST(PbtDecide, Errors) {
  EXPECT_THROW(pbt_decide({scored(0, 1.0)}, config_for(1, 0.5), 0), InvalidArgument);
  WorkerRecord stale = scored(1, 0.0);
  stale.scores.clear();
  EXPECT_THROW(pbt_decide({scored(0, 1.0), stale}, config_for(2, 0.5), 0), InvalidArgument);
}

TEST(PbtConfig, Validation) {
  PbtConfig c = config_for(8, 0.25);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.replace_count(), 2);
  c.replace_fraction = 0.6;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = config_for(8, 0.25);
  c.mutation_factor = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = config_for(8, 0.25);
  c.bounds["lr"] = {0.0, 1.0};
  EXPECT_THROW(c.validate(), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Checkpoint exchange

TEST(CheckpointStore, RoundtripAndLayout) {
  ScratchDir dir("store");
  CheckpointStore store(dir.path());
  WorkerRecord r = scored(3, 1.5, 0.02);
  r.generation = 4;
  r.scores = {{1, 0.5}, {4, 1.5}};
  store.write(r, std::string("blob\0with\nbytes", 15));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "pop" / "3" / "4.ckpt"));
  EXPECT_EQ(store.read_checkpoint(3, 4), std::string("blob\0with\nbytes", 15));
  const WorkerRecord back = store.read_meta(3, 4);
  EXPECT_EQ(back.id, 3);
  EXPECT_EQ(back.generation, 4);
  ASSERT_EQ(back.scores.size(), 2u);
  EXPECT_EQ(back.scores[1].score, 1.5);
  EXPECT_EQ(back.hyperparameters, r.hyperparameters);
}

TEST(CheckpointStore, MissingGenerationRetriesThenNamesWorker) {
  ScratchDir dir("missing");
  CheckpointStore store(dir.path(), 2);
  try {
    store.read_checkpoint(5, 9);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.worker(), 5);
    EXPECT_NE(std::string(e.what()).find("3 attempts"), std::string::npos);
  }
}

TEST(CheckpointStore, TornFileRejected) {
  ScratchDir dir("torn");
  CheckpointStore store(dir.path());
  store.write(scored(0, 1.0), std::string(1000, 'x'));
  const auto path = store.checkpoint_path(0, 1);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  EXPECT_THROW(store.read_checkpoint(0, 1), CheckpointError);
}

TEST(CheckpointStore, PartialWriteIsInvisible) {
  ScratchDir dir("partial");
  CheckpointStore store(dir.path());
  store.write(scored(0, 1.0), "gen1");
  WorkerRecord r2 = scored(0, 2.0);
  r2.generation = 2;
  store.set_write_hook([](int, int g) {
    if (g == 2) throw std::runtime_error("crash");
  });
  EXPECT_THROW(store.write(r2, "gen2"), std::runtime_error);
  EXPECT_TRUE(std::filesystem::exists(store.checkpoint_path(0, 2).string() + ".tmp"));
  EXPECT_FALSE(store.complete(0, 2));
  EXPECT_EQ(store.latest_complete_generation(1), 1);
  EXPECT_THROW(CheckpointStore(dir.path(), 0).read_checkpoint(0, 2), CheckpointError);
}

// ---------------------------------------------------------------------------
// Population runs

TEST(NoisyQuadratic, SaveLoadContinuesIdentically) {
  NoisyQuadratic a(6, 0.1, 10.0, 0.1, 42);
  a.train(17, {{"lr", 0.05}});
  const std::string blob = a.save();
  NoisyQuadratic b(6, 0.1, 10.0, 0.1, 999);
  b.load(blob);
  a.train(30, {{"lr", 0.05}});
  b.train(30, {{"lr", 0.05}});
  EXPECT_EQ(a.save(), b.save());
  EXPECT_EQ(a.evaluate(), b.evaluate());
}

TEST(NoisyQuadratic, DivergenceScoresLowest) {
  NoisyQuadratic q(4, 0.1, 10.0, 0.0, 1);
  q.train(2000, {{"lr", 1.0}});
  EXPECT_TRUE(std::isfinite(q.evaluate()));
  EXPECT_LT(q.evaluate(), -100.0);
}

TEST(RunPopulation, SingleWorkerIsPureTraining) {
  ScratchDir dir("single");
  PbtConfig c = fixtures::study_config();
  c.population = 1;
  RunOptions opts;
  opts.steps = 50;
  opts.directory = dir.path();
  opts.initial = {{{"lr", 0.05}}};
  const WorkerRecord best = run_population(fixtures::quadratic_factory(3), c, opts);
  auto ref = fixtures::quadratic_factory(3)(0);
  ref->train(50, {{"lr", 0.05}});
  EXPECT_EQ(best.latest_score(), ref->evaluate());
  EXPECT_EQ(best.hyperparameters.at("lr"), 0.05);
  EXPECT_EQ(best.scores.size(), 5u);
}

TEST(RunPopulation, BeatsBaselineMedian) {
  ScratchDir dir("study");
  const double med = fixtures::median(fixtures::baseline_scores(0));
  EXPECT_GE(fixtures::pbt_best(0, dir.path()).latest_score(), med);
}

TEST(RunPopulation, CrashRestartMatchesUninterruptedRun) {
  ScratchDir clean("clean");
  const WorkerRecord reference = fixtures::pbt_best(4, clean.path());

  ScratchDir crashed("crash");
  RunOptions opts;
  opts.steps = fixtures::kSteps;
  opts.seed = 4;
  opts.directory = crashed.path();
  opts.initial = fixtures::log_spaced_lr();
  opts.write_hook = [](int worker, int generation) {
    if (worker == 5 && generation == 7) throw std::runtime_error("injected crash");
  };
  EXPECT_THROW(run_population(fixtures::quadratic_factory(4), fixtures::study_config(), opts), std::runtime_error);
  CheckpointStore store(crashed.path());
  EXPECT_EQ(store.latest_complete_generation(fixtures::kPopulation), 6);

  opts.write_hook = nullptr;
  const WorkerRecord resumed = run_population(fixtures::quadratic_factory(4), fixtures::study_config(), opts);
  EXPECT_EQ(resumed.id, reference.id);
  EXPECT_EQ(resumed.hyperparameters, reference.hyperparameters);
  ASSERT_EQ(resumed.scores.size(), reference.scores.size());
  for (std::size_t i = 0; i < resumed.scores.size(); ++i) EXPECT_EQ(resumed.scores[i].score, reference.scores[i].score);
}

TEST(RunPopulation, CrashBeforeFirstScoreResumesFromInitialCheckpoints) {
  ScratchDir clean("clean0");
  const WorkerRecord reference = fixtures::pbt_best(6, clean.path());
  ScratchDir crashed("crash0");
  RunOptions opts;
  opts.steps = fixtures::kSteps;
  opts.seed = 6;
  opts.directory = crashed.path();
  opts.initial = fixtures::log_spaced_lr();
  opts.write_hook = [](int worker, int generation) {
    if (worker == 0 && generation == 1) throw std::runtime_error("injected crash");
  };
  EXPECT_THROW(run_population(fixtures::quadratic_factory(6), fixtures::study_config(), opts), std::runtime_error);
  EXPECT_EQ(CheckpointStore(crashed.path()).latest_complete_generation(fixtures::kPopulation), 0);
  opts.write_hook = nullptr;
  const WorkerRecord resumed = run_population(fixtures::quadratic_factory(6), fixtures::study_config(), opts);
  EXPECT_EQ(resumed.id, reference.id);
  EXPECT_EQ(resumed.latest_score(), reference.latest_score());
}

TEST(RunPopulation, RejectsBadOptions) {
  RunOptions opts;
  EXPECT_THROW(run_population(fixtures::quadratic_factory(0), fixtures::study_config(), opts), InvalidArgument);
  ScratchDir dir("bad");
  opts.directory = dir.path();
  opts.initial = {{{"lr", 5.0}}, {}, {}, {}, {}, {}, {}, {}};
  EXPECT_THROW(run_population(fixtures::quadratic_factory(0), fixtures::study_config(), opts), InvalidArgument);
}
