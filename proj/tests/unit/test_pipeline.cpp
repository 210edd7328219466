#include <gtest/gtest.h>

#include "kfactor/error.hpp"
#include "kfactor/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace kf;
using namespace kf::pipeline;
namespace fs = std::filesystem;

namespace {

const std::string kToy = KFACTOR_SOURCE_DIR "/configs/toy.yaml";

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Stages, NamesRoundTrip) {
  for (Stage s : all_stages()) EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_EQ(all_stages().size(), 6u);
  EXPECT_THROW(stage_from_string("train"), InvalidArgument);
}

TEST(Stages, ListParsingSortsAndDedupes) {
  EXPECT_EQ(parse_stage_list(""), all_stages());
  EXPECT_EQ(parse_stage_list("all"), all_stages());
  EXPECT_EQ(parse_stage_list("metrics, data,data"), (std::vector<Stage>{Stage::data, Stage::metrics}));
  EXPECT_THROW(parse_stage_list("data,bogus"), InvalidArgument);
}

TEST(OutputDir, OverrideAndEnvironmentRoot) {
  auto cfg = config::load(kToy);
  RunOptions opt;
  ::unsetenv(kOutRootEnv);
  EXPECT_EQ(resolve_output_dir(cfg, opt), fs::path("runs/toy"));
  ::setenv(kOutRootEnv, "/tmp/elsewhere", 1);
  EXPECT_EQ(resolve_output_dir(cfg, opt), fs::path("/tmp/elsewhere/runs/toy"));
  cfg.output_dir = "/abs/run";
  EXPECT_EQ(resolve_output_dir(cfg, opt), fs::path("/abs/run"));
  opt.out_dir = "given";
  EXPECT_EQ(resolve_output_dir(cfg, opt), fs::path("given"));
  ::unsetenv(kOutRootEnv);
}

TEST(Seeds, OverrideAndMixing) {
  const auto cfg = config::load(kToy);
  RunOptions opt;
  EXPECT_EQ(run_seeds(cfg, opt), cfg.evaluation.seeds);
  opt.seed_override = 9;
  EXPECT_EQ(run_seeds(cfg, opt), (std::vector<std::uint64_t>{9}));

  // Seed 0 keeps the configured seeds; any other seed changes all three.
  EXPECT_EQ(seeded_config(cfg, 0), cfg);
  const auto s1 = seeded_config(cfg, 1), s2 = seeded_config(cfg, 2);
  EXPECT_NE(s1.teacher.train.seed, cfg.teacher.train.seed);
  EXPECT_NE(s1.factorization.train.seed, s2.factorization.train.seed);
  EXPECT_NE(s1.baselines.train.seed, cfg.baselines.train.seed);
  EXPECT_EQ(s1.dataset, cfg.dataset);
}

TEST(StageDigest, DataIgnoresSeedDownstreamDoesNot) {
  const auto cfg = config::load(kToy);
  const std::vector<std::uint64_t> seeds{0, 1};
  EXPECT_EQ(stage_digest(cfg, Stage::data, 0, seeds), stage_digest(cfg, Stage::data, 1, seeds));
  EXPECT_NE(stage_digest(cfg, Stage::teacher, 0, seeds), stage_digest(cfg, Stage::teacher, 1, seeds));
  auto changed = cfg;
  changed.dataset.split_seed += 1;
  // A dataset change invalidates everything downstream.
  for (Stage s : all_stages()) EXPECT_NE(stage_digest(changed, s, 0, seeds), stage_digest(cfg, s, 0, seeds)) << to_string(s);
}

TEST(Run, MissingUpstreamIsDependencyError) {
  const auto cfg = config::load(kToy);
  RunOptions opt;
  opt.out_dir = fresh_dir("kfactor_test_pipeline_dep");
  opt.stages = {Stage::teacher};
  try {
    run(cfg, opt);
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_EQ(e.stage(), "data");
  }
  EXPECT_THROW(load_report(opt.out_dir), NotFound);
}

class ToyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new config::ExperimentConfig(config::load(kToy));
    dir_ = new fs::path(fresh_dir("kfactor_test_pipeline_toy"));
    RunOptions opt;
    opt.out_dir = *dir_;
    result_ = new RunResult(run(*cfg_, opt));
  }
  static void TearDownTestSuite() {
    delete cfg_;
    delete dir_;
    delete result_;
  }
  static config::ExperimentConfig* cfg_;
  static fs::path* dir_;
  static RunResult* result_;
};

config::ExperimentConfig* ToyRun::cfg_ = nullptr;
fs::path* ToyRun::dir_ = nullptr;
RunResult* ToyRun::result_ = nullptr;

TEST_F(ToyRun, EveryStageRanOnce) {
  EXPECT_EQ(result_->root, *dir_);
  // data and metrics once, four per-seed stages for the single toy seed.
  EXPECT_EQ(result_->outcomes.size(), 6u);
  for (const auto& o : result_->outcomes) {
    EXPECT_FALSE(o.skipped) << to_string(o.stage);
    EXPECT_EQ(o.digest.size(), 64u);
  }
  EXPECT_TRUE(fs::exists(report_path(*dir_)));
  EXPECT_TRUE(fs::exists(*dir_ / "metrics" / "report.jsonl"));
  EXPECT_TRUE(fs::exists(*dir_ / "seed_0" / "assemble" / "hub" / "manifest.json"));
}

TEST_F(ToyRun, ReportCoversEverySection) {
  const auto rep = load_report(*dir_);
  EXPECT_NO_THROW(rep.validate());
  EXPECT_EQ(rep.config_digest, config::digest(*cfg_));
  // teacher, mtl, kd, kf x 2 tasks x 1 seed.
  EXPECT_EQ(rep.tasks.size(), 8u);
  for (const auto& t : rep.tasks) {
    EXPECT_GE(t.auc, 0.0);
    EXPECT_LE(t.auc, 1.0);
  }
  EXPECT_FALSE(rep.disentanglement.empty());
  EXPECT_FALSE(rep.cka.empty());
  EXPECT_FALSE(rep.bounds.empty());
}

TEST_F(ToyRun, SplitIsExportedOnce) {
  const auto data = load_data(*dir_);
  EXPECT_EQ(data.train.size() + data.test.size(), cfg_->dataset.spec.grid_size());
  EXPECT_EQ(data.latents.size(), cfg_->dataset.spec.grid_size());
}

TEST_F(ToyRun, RerunSkipsEverything) {
  std::ostringstream log;
  RunOptions opt;
  opt.out_dir = *dir_;
  opt.log = &log;
  const auto again = run(*cfg_, opt);
  for (const auto& o : again.outcomes) EXPECT_TRUE(o.skipped) << to_string(o.stage);
  EXPECT_NE(log.str().find("[data] up to date, skipped"), std::string::npos) << log.str();
}

TEST_F(ToyRun, ChangedBinsOnlyRerunsMetrics) {
  auto cfg = *cfg_;
  cfg.evaluation.bins = 12;
  RunOptions opt;
  opt.out_dir = fresh_dir("kfactor_test_pipeline_toy_eval");
  fs::copy(*dir_, opt.out_dir, fs::copy_options::recursive);
  const auto res = run(cfg, opt);
  for (const auto& o : res.outcomes) EXPECT_EQ(o.skipped, o.stage != Stage::metrics) << to_string(o.stage);
  EXPECT_NE(report::numeric_content(load_report(opt.out_dir)), report::numeric_content(load_report(*dir_)));
}

TEST_F(ToyRun, SecondRunIsBitIdentical) {
  RunOptions opt;
  opt.out_dir = fresh_dir("kfactor_test_pipeline_toy_repeat");
  run(*cfg_, opt);
  EXPECT_EQ(report::numeric_content(load_report(opt.out_dir)), report::numeric_content(load_report(*dir_)));
}
