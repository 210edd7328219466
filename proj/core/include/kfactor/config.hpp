#pragma once

// Declarative experiment configuration (YAML), with schema validation that
// reports dotted field paths and a canonical digest for stage caching.

#include "kfactor/losses.hpp"
#include "kfactor/models.hpp"
#include "kfactor/synthdata.hpp"
#include "kfactor/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kf::config {

struct DatasetSection {
  synth::LatentFactorSpec spec;
  std::optional<std::size_t> subsample;  // render a seeded subset of the grid
  std::uint64_t subsample_seed = 0;
  double split_ratio = 0.7;
  std::uint64_t split_seed = 0;
  std::string import_path;  // non-empty: load an exported split instead of rendering

  bool operator==(const DatasetSection&) const = default;
};

struct TeacherSection {
  models::BackboneSpec backbone;
  train::TrainConfig train;

  bool operator==(const TeacherSection&) const = default;
};

struct FactorizationSection {
  loss::FactorizationConfig objective;
  models::BackboneSpec ckn;
  double tsn_width = 0.5;  // TSN channel widths relative to the CKN (final width kept)
  std::vector<std::size_t> critic_hidden;
  train::TrainConfig train;

  train::StudentSpecs students() const;
  bool operator==(const FactorizationSection&) const = default;
};

struct BaselineSection {
  bool multitask = true;   // one multi-head student trained on labels
  bool distilled = true;   // one single-task student per task distilled from the teacher
  models::BackboneSpec backbone;
  train::TrainConfig train;

  bool operator==(const BaselineSection&) const = default;
};

struct EvaluationSection {
  std::vector<std::uint64_t> seeds{0};
  bool auc = true;
  bool disentanglement = true;
  bool cka = true;
  int bins = 20;
  int factor_vae_votes = 800;
  int factor_vae_batch = 64;
  std::uint64_t metric_seed = 0;

  bool operator==(const EvaluationSection&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string output_dir = "runs/experiment";
  DatasetSection dataset;
  TeacherSection teacher;
  FactorizationSection factorization;
  BaselineSection baselines;
  EvaluationSection evaluation;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_yaml(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);
std::string to_yaml(const ExperimentConfig& cfg);

/// SHA-256 of the canonical YAML of the whole config or one top-level section
/// ("dataset", "teacher", "factorization", "baselines", "evaluation").
std::string digest(const ExperimentConfig& cfg);
std::string section_digest(const ExperimentConfig& cfg, const std::string& section);

}  // namespace kf::config
