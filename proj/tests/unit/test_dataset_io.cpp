#include <gtest/gtest.h>

#include "kfactor/dataset_io.hpp"
#include "kfactor/error.hpp"

#include <filesystem>

using namespace kf;
namespace fs = std::filesystem;

namespace {

synth::LatentFactorSpec spec() {
  synth::LatentFactorSpec s;
  s.height = s.width = 16;
  s.factors = {{"shape", {0, 1, 2}}, {"scale", {0.5, 0.75, 1.0}}, {"orientation", {0.0, 0.7}}};
  return s;
}

}  // namespace

TEST(TaskDataset, FromSamplesStacksImagesAndLabels) {
  const auto s = spec();
  const auto samples = synth::render_all(s, synth::build_latent_grid(s));
  const auto ds = data::TaskDataset::from_samples(samples, s);
  EXPECT_EQ(ds.size(), 18u);
  EXPECT_EQ(ds.num_tasks(), 3u);
  EXPECT_EQ(ds.num_classes(), (std::vector<std::size_t>{3, 3, 2}));
  EXPECT_EQ(ds.sample_shape(), (Shape{1, 16, 16}));
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(ds.label(i, j), samples[i].task_labels[j]);
  const std::vector<std::size_t> rows{4, 1};
  const auto sub = ds.subset(rows);
  EXPECT_EQ(sub.images().slice_rows(0, 1).reshaped({1, 16, 16}), samples[4].image.reshaped({1, 16, 16}));
  EXPECT_EQ(sub.task_labels(0), (std::vector<int>{samples[4].task_labels[0], samples[1].task_labels[0]}));
  EXPECT_EQ(ds.label_matrix()(4, 1), samples[4].task_labels[1]);
}

TEST(TaskDataset, RejectsBadLabels) {
  EXPECT_THROW(data::TaskDataset(Tensor({2, 1, 8, 8}), {0, 3}, {3}), InvalidArgument);
  EXPECT_THROW(data::TaskDataset(Tensor({2, 1, 8, 8}), {0}, {3}), InvalidArgument);
}

TEST(Export, RoundTripIsBitExact) {
  const auto s = spec();
  const auto split = synth::split_dataset(synth::render_all(s, synth::build_latent_grid(s)), 0.7, 5);
  const auto dir = fs::temp_directory_path() / "kfactor_test_export";
  fs::remove_all(dir);
  data::export_split(dir, s, split);
  const auto back = data::import_split(dir);
  EXPECT_EQ(back.spec, s);
  EXPECT_EQ(back.split.seed, 5u);
  EXPECT_EQ(back.split.ratio, 0.7);
  ASSERT_EQ(back.split.train.size(), split.train.size());
  ASSERT_EQ(back.split.test.size(), split.test.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    EXPECT_EQ(back.split.train[i].image, split.train[i].image);
    EXPECT_EQ(back.split.train[i].latent_index, split.train[i].latent_index);
    EXPECT_EQ(back.split.train[i].task_labels, split.train[i].task_labels);
  }
  for (std::size_t i = 0; i < split.test.size(); ++i) EXPECT_EQ(back.split.test[i].image, split.test[i].image);
}

TEST(Export, MissingDirectoryIsNotFound) {
  EXPECT_THROW(data::import_split(fs::temp_directory_path() / "kfactor_no_such_export"), NotFound);
}

TEST(SpecJson, RoundTrip) {
  EXPECT_EQ(data::spec_from_json(data::spec_to_json(synth::LatentFactorSpec::shapes3d())),
            synth::LatentFactorSpec::shapes3d());
  EXPECT_THROW(data::spec_from_json("{\"scene\": 3}"), InvalidArgument);
}
