#include <gtest/gtest.h>

#include "kfactor/error.hpp"
#include "kfactor/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace kf;
using namespace kf::synth;

namespace {

LatentFactorSpec small_sprites() {
  LatentFactorSpec spec;
  spec.height = spec.width = 32;
  spec.factors = {{"shape", {0, 1, 2}}, {"scale", {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}}};
  return spec;
}

double centroid_column(const Tensor& image) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  double mass = 0.0, moment = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = image[y * w + x];
      mass += v;
      moment += v * static_cast<double>(x);
    }
  return moment / mass;
}

double foreground(const Tensor& image) {
  return static_cast<double>(std::count_if(image.values().begin(), image.values().end(), [](double v) { return v > 0.5; }));
}

}  // namespace

TEST(LatentGrid, CartesianProductIsComplete) {
  const auto spec = small_sprites();
  const auto grid = build_latent_grid(spec);
  ASSERT_EQ(grid.size(), 18u);
  std::set<LatentIndex> unique(grid.begin(), grid.end());
  EXPECT_EQ(unique.size(), 18u);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(linear_index(spec, grid[i]), i);
}

TEST(LatentGrid, DspritesGridSize) {
  EXPECT_EQ(LatentFactorSpec::dsprites().grid_size(), 737280u);
  EXPECT_EQ(LatentFactorSpec::shapes3d().grid_size(), 480000u);
}

TEST(LatentGrid, SubsampleIsDeterministic) {
  const auto spec = LatentFactorSpec::dsprites();
  const auto a = build_latent_grid(spec, 100, 17);
  const auto b = build_latent_grid(spec, 100, 17);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, build_latent_grid(spec, 100, 18));
}

TEST(LatentGrid, SubsampleLargerThanGridThrows) {
  EXPECT_THROW(build_latent_grid(small_sprites(), 19), InvalidArgument);
}

TEST(LatentGrid, UnravelInvertsLinearIndex) {
  const auto spec = LatentFactorSpec::dsprites();
  for (std::size_t linear : {std::size_t{0}, std::size_t{12345}, spec.grid_size() - 1})
    EXPECT_EQ(linear_index(spec, unravel_index(spec, linear)), linear);
  EXPECT_THROW(unravel_index(spec, spec.grid_size()), InvalidArgument);
}

TEST(Render, IsPure) {
  const auto spec = LatentFactorSpec::dsprites();
  const LatentIndex idx{2, 3, 7, 10, 20};
  const auto a = render_sample(spec, idx);
  const auto b = render_sample(spec, idx);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.image.shape(), (Shape{1, 64, 64}));
  for (double v : a.image.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Render, OutOfRangeIndexThrows) {
  const auto spec = small_sprites();
  EXPECT_THROW(render_sample(spec, {3, 0}), InvalidArgument);
  EXPECT_THROW(render_sample(spec, {0}), InvalidArgument);
}

TEST(Render, PositionMovesCentroidRight) {
  const auto spec = LatentFactorSpec::dsprites();
  const double left = centroid_column(render_sample(spec, {0, 5, 0, 0, 16}).image);
  const double mid = centroid_column(render_sample(spec, {0, 5, 0, 16, 16}).image);
  const double right = centroid_column(render_sample(spec, {0, 5, 0, 31, 16}).image);
  EXPECT_LT(left, mid);
  EXPECT_LT(mid, right);
}

TEST(Render, ScaleIsMonotoneInPixelCount) {
  const auto spec = LatentFactorSpec::dsprites();
  for (std::size_t shape = 0; shape < 3; ++shape) {
    double prev = -1.0;
    for (std::size_t s = 0; s < 6; ++s) {
      const double count = foreground(render_sample(spec, {shape, s, 0, 16, 16}).image);
      EXPECT_GE(count, prev) << "shape " << shape << " scale " << s;
      prev = count;
    }
  }
}

TEST(Render, EveryFactorIsIdentifiable) {
  // Changing one factor from a generic base point changes at least one pixel.
  for (const auto& spec : {LatentFactorSpec::dsprites(), LatentFactorSpec::shapes3d()}) {
    LatentIndex base(spec.num_factors());
    for (std::size_t f = 0; f < base.size(); ++f) base[f] = spec.factors[f].values.size() / 3;
    const Tensor ref = render_sample(spec, base).image;
    for (std::size_t f = 0; f < base.size(); ++f) {
      LatentIndex other = base;
      other[f] = (base[f] + 1) % spec.factors[f].values.size();
      EXPECT_NE(render_sample(spec, other).image, ref) << spec.factors[f].name;
    }
  }
}

TEST(Render, Shapes3dIsColour) {
  const auto spec = LatentFactorSpec::shapes3d();
  const auto s = render_sample(spec, {0, 1, 2, 3, 1, 7});
  EXPECT_EQ(s.image.shape(), (Shape{3, 64, 64}));
}

TEST(Labels, AreFactorIndices) {
  auto spec = small_sprites();
  spec.factors.push_back({"orientation", {0.0, 1.0}});
  EXPECT_EQ(derive_task_labels({2, 1, 0}, spec), (std::vector<int>{2, 1, 0}));
}

TEST(Spec, ValidationRejectsBadFactors) {
  auto spec = small_sprites();
  spec.factors.push_back({"floor_hue", {0.0, 0.5}});
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = small_sprites();
  spec.factors[0].values = {0, 1, 5};
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = small_sprites();
  spec.factors.push_back(spec.factors[0]);
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(Split, SizeArithmetic) {
  std::size_t n_train = 0;
  split_permutation(10, 0.7, 1, &n_train);
  EXPECT_EQ(n_train, 7u);
  split_permutation(737280, 0.7, 1, &n_train);
  EXPECT_EQ(n_train, static_cast<std::size_t>(std::llround(0.7 * 737280)));
  EXPECT_EQ(n_train, 516096u);
}

TEST(Split, DeterministicAndDisjoint) {
  const auto spec = small_sprites();
  const auto samples = render_all(spec, build_latent_grid(spec));
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    for (double ratio : {0.3, 0.5, 0.7}) {
      const auto a = split_dataset(samples, ratio, seed);
      const auto b = split_dataset(samples, ratio, seed);
      ASSERT_EQ(a.train.size(), static_cast<std::size_t>(std::llround(ratio * 18)));
      ASSERT_EQ(a.train.size() + a.test.size(), 18u);
      std::set<LatentIndex> train, test;
      for (std::size_t i = 0; i < a.train.size(); ++i) {
        train.insert(a.train[i].latent_index);
        EXPECT_EQ(a.train[i].latent_index, b.train[i].latent_index);
      }
      for (const auto& s : a.test) test.insert(s.latent_index);
      for (const auto& idx : train) EXPECT_EQ(test.count(idx), 0u);
      EXPECT_EQ(train.size() + test.size(), 18u);
    }
  }
}

TEST(Split, EmptyInputThrows) {
  EXPECT_THROW(split_dataset({}, 0.7, 0), InvalidArgument);
}
