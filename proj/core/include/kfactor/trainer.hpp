#pragma once

// Teacher pretraining, baseline students, joint knowledge factorization,
// CKN transfer finetuning and evaluation.

#include "kfactor/dataset_io.hpp"
#include "kfactor/losses.hpp"
#include "kfactor/models.hpp"
#include "kfactor/optim.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kf::train {

struct TrainConfig {
  optim::OptimConfig optim;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  void validate(const std::string& section = "train") const;
  bool operator==(const TrainConfig&) const = default;
};

std::string to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json);
std::string to_json(const loss::FactorizationConfig& cfg);
loss::FactorizationConfig factorization_config_from_json(const std::string& json);

/// Append-only record of named scalars per optimizer step.
struct LogRecord {
  std::size_t step;
  std::string name;
  double value;

  bool operator==(const LogRecord&) const = default;
};

class TrainingLog {
 public:
  void add(std::size_t step, std::string name, double value) { records_.push_back({step, std::move(name), value}); }
  const std::vector<LogRecord>& records() const noexcept { return records_; }
  /// Distinct series names in first-appearance order.
  std::vector<std::string> series_names() const;
  std::vector<double> series(const std::string& name) const;

  /// One JSON object per line: {"step": .., "name": .., "value": ..}.
  void write_jsonl(const std::filesystem::path& path) const;
  static TrainingLog read_jsonl(const std::filesystem::path& path);

  bool operator==(const TrainingLog&) const = default;

 private:
  std::vector<LogRecord> records_;
};

/// Multi-head network trained on the summed supervised losses of all tasks.
/// Used for the teacher and for the multi-task baseline.
models::MultiHeadNet pretrain_teacher(const data::TaskDataset& train, const models::BackboneSpec& spec,
                                      const TrainConfig& cfg, TrainingLog* log = nullptr);

/// Single-task student for `task`; with lambda_kt > 0 it is distilled from the
/// teacher's task logits (soft targets at `temperature`), otherwise plain supervised.
models::MultiHeadNet train_single_task(const data::TaskDataset& train, const models::BackboneSpec& spec,
                                       std::size_t task, const models::MultiHeadNet* teacher, double lambda_kt,
                                       double temperature, const TrainConfig& cfg, TrainingLog* log = nullptr);

/// Student architectures used by factorize.
struct StudentSpecs {
  models::BackboneSpec ckn;
  models::BackboneSpec tsn;
  std::vector<std::size_t> critic_hidden;  // FFN hidden widths; empty = linear map
};

/// Output of a factorization run.
struct FactorSet {
  std::shared_ptr<models::Backbone> ckn;
  std::vector<models::FactorNetwork> factors;
  models::CriticAligner critic;
  loss::FactorizationConfig config;
  TrainConfig train_config;
  std::string teacher_digest;
  TrainingLog log;

  std::size_t num_tasks() const noexcept { return factors.size(); }
  std::string ckn_digest() const { return ckn->params().digest(); }
};

/// Joint optimization of CKN, TSNs, heads, auxiliary heads and critic FFN
/// against the total factorization objective. The teacher is never modified.
FactorSet factorize(const models::MultiHeadNet& teacher, const data::TaskDataset& train,
                    const loss::FactorizationConfig& config, const StudentSpecs& students, const TrainConfig& cfg);

void save_factor_set(const std::filesystem::path& dir, const FactorSet& set);
FactorSet load_factor_set(const std::filesystem::path& dir);

struct FinetuneResult {
  models::MultiHeadNet model;
  double test_accuracy;
};

/// Fresh head on top of a copy of `ckn` for `task` of the downstream data; all
/// parameters trainable. Zero epochs evaluates the untouched CKN with the fresh head.
FinetuneResult finetune_ckn(const models::Backbone& ckn, const data::TaskDataset& train,
                            const data::TaskDataset& test, std::size_t task, const TrainConfig& cfg);

struct TaskMetrics {
  double accuracy = 0.0;
  double macro_auc = 0.0;
  std::vector<std::optional<double>> class_auc;  // nullopt when the class is absent from the labels
};

/// One-vs-rest AUC of `scores` for every class; absent classes are excluded from the macro mean.
TaskMetrics classification_metrics(const Tensor& logits, std::span<const int> labels);

std::vector<TaskMetrics> evaluate(const models::MultiHeadNet& model, const data::TaskDataset& test);
std::vector<TaskMetrics> evaluate(const FactorSet& set, const data::TaskDataset& test);

/// Backbone output for every image, in chunks.
Tensor extract_features(const models::Backbone& backbone, const Tensor& images, std::size_t chunk = 256);
/// Pooled output of block `block` (negative = final feature) for every image.
Tensor extract_block_features(const models::Backbone& backbone, const Tensor& images, int block,
                              std::size_t chunk = 256);
/// Applies `fn` to consecutive row chunks of `images` and stacks the results.
Tensor map_chunks(const Tensor& images, std::size_t chunk, const std::function<Tensor(const Tensor&)>& fn);

}  // namespace kf::train
