#pragma once

// Batched task datasets and on-disk export of rendered splits.
//
// Export layout (one directory):
//   metadata.json        factor spec, seed, ratio, latent indices of each split
//   train_images.kft     N_train x C x H x W tensor file
//   test_images.kft      N_test  x C x H x W tensor file

#include "kfactor/synthdata.hpp"
#include "kfactor/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kf::data {

/// Images stacked into one tensor with a per-task label column.
class TaskDataset {
 public:
  TaskDataset() = default;
  TaskDataset(Tensor images, std::vector<int> labels, std::vector<std::size_t> num_classes);

  static TaskDataset from_samples(const std::vector<synth::LabeledSample>& samples, const synth::LatentFactorSpec& spec);

  std::size_t size() const noexcept { return images_.empty() ? 0 : images_.dim(0); }
  std::size_t num_tasks() const noexcept { return num_classes_.size(); }
  const std::vector<std::size_t>& num_classes() const noexcept { return num_classes_; }
  const Tensor& images() const noexcept { return images_; }
  Shape sample_shape() const;

  int label(std::size_t sample, std::size_t task) const { return labels_[sample * num_tasks() + task]; }
  /// Labels of `task` for the given rows (all rows if `rows` is empty).
  std::vector<int> task_labels(std::size_t task, std::span<const std::size_t> rows = {}) const;
  /// N x K integer matrix of all labels, one column per task.
  Eigen::MatrixXi label_matrix() const;

  Tensor gather(std::span<const std::size_t> rows) const;
  TaskDataset subset(std::span<const std::size_t> rows) const;

 private:
  Tensor images_;
  std::vector<int> labels_;  // row-major N x K
  std::vector<std::size_t> num_classes_;
};

std::string spec_to_json(const synth::LatentFactorSpec& spec);
synth::LatentFactorSpec spec_from_json(const std::string& json);

struct ExportedSplit {
  synth::LatentFactorSpec spec;
  synth::DatasetSplit split;
};

void export_split(const std::filesystem::path& dir, const synth::LatentFactorSpec& spec, const synth::DatasetSplit& split);
ExportedSplit import_split(const std::filesystem::path& dir);

}  // namespace kf::data
