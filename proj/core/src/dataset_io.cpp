#include "kfactor/dataset_io.hpp"

#include "kfactor/checkpoint.hpp"
#include "kfactor/error.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace kf::data {

using nlohmann::json;

TaskDataset::TaskDataset(Tensor images, std::vector<int> labels, std::vector<std::size_t> num_classes)
    : images_(std::move(images)), labels_(std::move(labels)), num_classes_(std::move(num_classes)) {
  if (images_.rank() != 4) throw InvalidArgument("dataset: images must be N x C x H x W");
  if (num_classes_.empty()) throw InvalidArgument("dataset: no tasks");
  if (labels_.size() != images_.dim(0) * num_classes_.size()) throw InvalidArgument("dataset: label count mismatch");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int y = labels_[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes_[i % num_classes_.size()]) {
      throw InvalidArgument("dataset: label out of class range");
    }
  }
}

TaskDataset TaskDataset::from_samples(const std::vector<synth::LabeledSample>& samples,
                                      const synth::LatentFactorSpec& spec) {
  if (samples.empty()) throw InvalidArgument("dataset: no samples");
  const Shape s = samples.front().image.shape();
  Tensor images({samples.size(), s[0], s[1], s[2]});
  const std::size_t stride = shape_size(s);
  std::vector<int> labels;
  labels.reserve(samples.size() * spec.num_factors());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].image.shape() != s) throw InvalidArgument("dataset: inconsistent image shapes");
    std::memcpy(images.data() + i * stride, samples[i].image.data(), stride * sizeof(double));
    labels.insert(labels.end(), samples[i].task_labels.begin(), samples[i].task_labels.end());
  }
  return TaskDataset(std::move(images), std::move(labels), spec.cardinalities());
}

Shape TaskDataset::sample_shape() const { return {images_.dim(1), images_.dim(2), images_.dim(3)}; }

std::vector<int> TaskDataset::task_labels(std::size_t task, std::span<const std::size_t> rows) const {
  if (task >= num_tasks()) throw InvalidArgument("dataset: task out of range");
  std::vector<int> out;
  if (rows.empty()) {
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(label(i, task));
  } else {
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(label(r, task));
  }
  return out;
}

Eigen::MatrixXi TaskDataset::label_matrix() const {
  Eigen::MatrixXi m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(num_tasks()));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < num_tasks(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = label(i, j);
  return m;
}

Tensor TaskDataset::gather(std::span<const std::size_t> rows) const {
  const Shape s = sample_shape();
  const std::size_t stride = shape_size(s);
  Tensor out({rows.size(), s[0], s[1], s[2]});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw InvalidArgument("dataset: row out of range");
    std::memcpy(out.data() + i * stride, images_.data() + rows[i] * stride, stride * sizeof(double));
  }
  return out;
}

TaskDataset TaskDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<int> labels;
  labels.reserve(rows.size() * num_tasks());
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < num_tasks(); ++j) labels.push_back(label(r, j));
  return TaskDataset(gather(rows), std::move(labels), num_classes_);
}

namespace {

json spec_json(const synth::LatentFactorSpec& spec) {
  json factors = json::array();
  for (const auto& f : spec.factors) factors.push_back({{"name", f.name}, {"values", f.values}});
  return {{"scene", synth::to_string(spec.scene)},
          {"height", spec.height},
          {"width", spec.width},
          {"channels", spec.channels},
          {"factors", factors}};
}

synth::LatentFactorSpec spec_from(const json& j) {
  synth::LatentFactorSpec spec;
  spec.scene = synth::scene_kind_from_string(j.at("scene").get<std::string>());
  spec.height = j.at("height").get<std::size_t>();
  spec.width = j.at("width").get<std::size_t>();
  spec.channels = j.at("channels").get<std::size_t>();
  for (const auto& f : j.at("factors")) {
    spec.factors.push_back({f.at("name").get<std::string>(), f.at("values").get<std::vector<double>>()});
  }
  spec.validate();
  return spec;
}

json index_list(const std::vector<synth::LabeledSample>& samples) {
  json out = json::array();
  for (const auto& s : samples) out.push_back(s.latent_index);
  return out;
}

std::vector<synth::LabeledSample> restore(const synth::LatentFactorSpec& spec, const json& indices, const Tensor& images) {
  const std::size_t n = indices.size();
  if (images.rank() != 4 || images.dim(0) != n) throw InvalidArgument("dataset import: image tensor does not match metadata");
  const Shape s{images.dim(1), images.dim(2), images.dim(3)};
  const std::size_t stride = shape_size(s);
  std::vector<synth::LabeledSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].latent_index = indices[i].get<synth::LatentIndex>();
    synth::validate_index(spec, out[i].latent_index);
    out[i].task_labels = synth::derive_task_labels(out[i].latent_index, spec);
    out[i].image = Tensor(s);
    std::memcpy(out[i].image.data(), images.data() + i * stride, stride * sizeof(double));
  }
  return out;
}

Tensor stack(const std::vector<synth::LabeledSample>& samples, const synth::LatentFactorSpec& spec) {
  const Shape s{spec.channels, spec.height, spec.width};
  const std::size_t stride = shape_size(s);
  Tensor out({samples.size(), s[0], s[1], s[2]});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].image.shape() != s) throw InvalidArgument("dataset export: image shape does not match spec");
    std::memcpy(out.data() + i * stride, samples[i].image.data(), stride * sizeof(double));
  }
  return out;
}

}  // namespace

std::string spec_to_json(const synth::LatentFactorSpec& spec) { return spec_json(spec).dump(); }

synth::LatentFactorSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("factor spec: ") + e.what());
  }
}

void export_split(const std::filesystem::path& dir, const synth::LatentFactorSpec& spec, const synth::DatasetSplit& split) {
  std::filesystem::create_directories(dir);
  const json meta{{"format", "kfactor-dataset/1"},
                  {"spec", spec_json(spec)},
                  {"seed", split.seed},
                  {"ratio", split.ratio},
                  {"train", index_list(split.train)},
                  {"test", index_list(split.test)}};
  std::ofstream(dir / "metadata.json") << meta.dump(1) << '\n';
  ckpt::save_tensor_file(dir / "train_images.kft", stack(split.train, spec));
  ckpt::save_tensor_file(dir / "test_images.kft", stack(split.test, spec));
}

ExportedSplit import_split(const std::filesystem::path& dir) {
  std::ifstream in(dir / "metadata.json");
  if (!in) throw NotFound("dataset metadata not found in '" + dir.string() + "'");
  try {
    const json meta = json::parse(in);
    ExportedSplit out;
    out.spec = spec_from(meta.at("spec"));
    out.split.seed = meta.at("seed").get<std::uint64_t>();
    out.split.ratio = meta.at("ratio").get<double>();
    out.split.train = restore(out.spec, meta.at("train"), ckpt::load_tensor_file(dir / "train_images.kft"));
    out.split.test = restore(out.spec, meta.at("test"), ckpt::load_tensor_file(dir / "test_images.kft"));
    return out;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("dataset metadata: ") + e.what());
  }
}

}  // namespace kf::data
