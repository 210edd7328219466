#pragma once

// Experiment pipeline: data -> teacher -> factorize -> assemble -> evaluate -> metrics.
//
// Run directory layout:
//   data/                      exported split (shared by all seeds)
//   seed_<s>/teacher/          teacher.kfckpt, log.jsonl
//   seed_<s>/factorize/        kf/ (factor set), mtl.kfckpt, kd_<j>.kfckpt, logs
//   seed_<s>/assemble/hub/     factor hub
//   seed_<s>/evaluate/         evaluation.json
//   metrics/                   report.json, report.jsonl
//   report.json                copy of metrics/report.json
// Every stage directory holds stage.json recording the stage digest and the
// digests of the config sections that produced it. A stage whose stage.json
// already carries the expected digest is skipped.

#include "kfactor/config.hpp"
#include "kfactor/dataset_io.hpp"
#include "kfactor/report.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kf::pipeline {

enum class Stage { data, teacher, factorize, assemble, evaluate, metrics };

std::string to_string(Stage stage);
/// Throws InvalidArgument for unknown names.
Stage stage_from_string(const std::string& name);
std::vector<Stage> all_stages();
/// Comma-separated stage names ("all" or empty = every stage), returned in pipeline order.
std::vector<Stage> parse_stage_list(const std::string& list);

inline constexpr const char* kOutRootEnv = "KFACTOR_OUT_ROOT";

struct RunOptions {
  std::filesystem::path out_dir;             // empty: derive from the config
  std::optional<std::uint64_t> seed_override;
  std::vector<Stage> stages;                 // empty: all
  std::ostream* log = nullptr;               // progress messages
};

struct StageOutcome {
  Stage stage;
  std::optional<std::uint64_t> seed;  // nullopt for seed-independent stages
  bool skipped = false;
  std::string digest;
  double seconds = 0.0;
};

struct RunResult {
  std::filesystem::path root;
  std::vector<StageOutcome> outcomes;
};

/// --out if given, else the config's output_dir; a relative output_dir is
/// resolved against $KFACTOR_OUT_ROOT when that is set.
std::filesystem::path resolve_output_dir(const config::ExperimentConfig& cfg, const RunOptions& options);

std::vector<std::uint64_t> run_seeds(const config::ExperimentConfig& cfg, const RunOptions& options);

/// The config with every training seed combined with the run seed.
config::ExperimentConfig seeded_config(const config::ExperimentConfig& cfg, std::uint64_t seed);

/// Content digest a stage's outputs must carry; depends only on the config and seed.
std::string stage_digest(const config::ExperimentConfig& cfg, Stage stage, std::uint64_t seed,
                         const std::vector<std::uint64_t>& seeds);

/// Executes the requested stages in dependency order. Throws DependencyError
/// naming the missing or stale upstream stage.
RunResult run(const config::ExperimentConfig& cfg, const RunOptions& options);

std::filesystem::path report_path(const std::filesystem::path& run_dir);
/// Throws NotFound if the run has no report.
report::MetricReport load_report(const std::filesystem::path& run_dir);

struct LoadedData {
  synth::LatentFactorSpec spec;
  data::TaskDataset train;
  data::TaskDataset test;
  /// Latent indices of train followed by test rows.
  std::vector<synth::LatentIndex> latents;
};
LoadedData load_data(const std::filesystem::path& run_dir);

}  // namespace kf::pipeline
