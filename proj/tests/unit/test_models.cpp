#include <gtest/gtest.h>

#include "kfactor/error.hpp"
#include "kfactor/models.hpp"

#include <random>

using namespace kf;
using namespace kf::models;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (auto& v : t.values()) v = g(rng);
  return t;
}

BackboneSpec tiny_cnn() {
  auto spec = BackboneSpec::cnn3(1, 16, 16);
  spec.widths = {4, 4, 6};
  return spec;
}

}  // namespace

TEST(BackboneSpec, FeatureDims) {
  EXPECT_EQ(BackboneSpec::cnn3(1, 64, 64).feature_dim(), 64u);
  const auto six = BackboneSpec::cnn6(1, 64, 64);
  EXPECT_EQ(six.num_blocks(), 6u);
  EXPECT_EQ(six.feature_dim(), six.widths.back());  // 64 / 2^6 = 1 pixel
  EXPECT_EQ(BackboneSpec::mlp(1, 4, 4, {7, 5}).feature_dim(), 5u);
}

TEST(BackboneSpec, NarrowedKeepsOutputWidth) {
  const auto spec = BackboneSpec::cnn3(1, 32, 32);
  const auto half = spec.narrowed(0.5);
  EXPECT_EQ(half.widths.back(), spec.widths.back());
  EXPECT_EQ(half.widths[0], spec.widths[0] / 2);
  EXPECT_EQ(half.feature_dim(), spec.feature_dim());
}

TEST(BackboneSpec, JsonRoundTrip) {
  const auto spec = BackboneSpec::mlp(3, 8, 8, {9, 4});
  EXPECT_EQ(backbone_spec_from_json(to_json(spec)), spec);
}

TEST(Backbone, SeededInitIsDeterministic) {
  const Backbone a(tiny_cnn(), 5), b(tiny_cnn(), 5), c(tiny_cnn(), 6);
  EXPECT_EQ(a.params().digest(), b.params().digest());
  EXPECT_TRUE(a.params() == b.params());
  EXPECT_NE(a.params().digest(), c.params().digest());
}

TEST(Backbone, ShapeMismatchThrows) {
  const Backbone net(tiny_cnn(), 1);
  EXPECT_THROW(net.forward(Tensor({2, 1, 8, 16})), InvalidArgument);
  EXPECT_THROW(net.forward(Tensor({2, 3, 16, 16})), InvalidArgument);
}

TEST(Backbone, OutputIsBatchIndependentAndFinite) {
  const Backbone net(tiny_cnn(), 2);
  const Tensor batch = random_tensor({5, 1, 16, 16}, 3);
  const Tensor all = net.forward(batch);
  ASSERT_EQ(all.shape(), (Shape{5, 6}));
  EXPECT_TRUE(all.all_finite());
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor one = net.forward(batch.slice_rows(i, i + 1));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(one.at(0, c), all.at(i, c));
  }
}

TEST(Backbone, ZeroFinalLayerGivesZeroFeatures) {
  Backbone net(tiny_cnn(), 2);
  for (auto& p : net.params().items())
    if (p.name.starts_with("block2")) p.value.fill(0.0);
  const Tensor z = net.forward(random_tensor({3, 1, 16, 16}, 4));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, ForwardCallsAreCounted) {
  const Backbone net(tiny_cnn(), 2);
  const Tensor x = random_tensor({2, 1, 16, 16}, 4);
  net.forward(x);
  forward_ckn(net, x);
  EXPECT_EQ(net.forward_calls(), 2u);
}

TEST(Backbone, RejectsMismatchedParameters) {
  const Backbone other(BackboneSpec::cnn3(1, 16, 16), 1);
  EXPECT_THROW(Backbone(tiny_cnn(), other.params()), InvalidArgument);
}

TEST(Backbone, ParameterCountMatchesArchitecture) {
  // Conv 4x4: in*out*16 + out per block.
  const auto spec = tiny_cnn();
  const Backbone net(spec, 0);
  std::size_t expected = 0, in = spec.in_channels;
  for (auto w : spec.widths) {
    expected += in * w * 16 + w;
    in = w;
  }
  EXPECT_EQ(net.parameter_count(), expected);
}

TEST(ForwardHead, AdditiveFusionInvariances) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TaskHead head(6, {5}, 3, seed);
    const Tensor z = random_tensor({4, 6}, seed + 10), t = random_tensor({4, 6}, seed + 20);
    EXPECT_EQ(forward_head(head, z, Tensor({4, 6})), head.forward(z));
    EXPECT_EQ(forward_head(head, z, t), forward_head(head, t, z));
  }
}

TEST(ForwardHead, LinearHeadMatchesManualProduct) {
  const TaskHead head(3, {}, 2, 9);
  const Tensor z = random_tensor({2, 3}, 1), t = random_tensor({2, 3}, 2);
  const auto& w = head.params().get("out.weight").value;
  const auto& b = head.params().get("out.bias").value;
  const Tensor y = forward_head(head, z, t);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 2; ++k) {
      double expected = b[k];
      for (std::size_t i = 0; i < 3; ++i) expected += w[k * 3 + i] * (z.at(n, i) + t.at(n, i));
      EXPECT_NEAR(y.at(n, k), expected, 1e-14);
    }
}

TEST(ForwardHead, ShapeMismatchThrows) {
  const TaskHead head(3, {}, 2, 9);
  EXPECT_THROW(forward_head(head, Tensor({2, 3}), Tensor({2, 4})), InvalidArgument);
}

TEST(AuxHead, ZeroWeightsGiveBias) {
  TaskHead head(4, {}, 3, 1);
  head.params().get("out.weight").value.fill(0.0);
  auto& bias = head.params().get("out.bias").value;
  bias = Tensor({3}, {0.5, -1.0, 2.0});
  const Tensor y = forward_aux_head(head, random_tensor({2, 4}, 3));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(y.at(n, k), bias[k]);
}

TEST(Critic, IdentityFfnOnOrthonormalRows) {
  auto critic = CriticAligner::make(3, 3, {}, -1, 0);
  auto& w = critic.ffn.params().get("out.weight").value;
  w.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  critic.ffn.params().get("out.bias").value.fill(0.0);
  Tensor z({3, 3});
  z.at(0, 1) = 1.0;
  z.at(1, 2) = 1.0;
  z.at(2, 0) = 1.0;
  const Tensor s = critic_score(critic, z, z);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(s.at(i, k), i == k ? 1.0 : 0.0);
}

TEST(Critic, ZeroCknRowGivesZeroScores) {
  const auto critic = CriticAligner::make(4, 3, {5}, -1, 1);
  Tensor zc = random_tensor({3, 3}, 2);
  for (std::size_t c = 0; c < 3; ++c) zc.at(1, c) = 0.0;
  const Tensor s = critic_score(critic, random_tensor({3, 4}, 3), zc);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s.at(1, k), 0.0);
}

TEST(Critic, MatchesExplicitDotProducts) {
  const auto critic = CriticAligner::make(2, 3, {}, -1, 4);
  const Tensor zt = random_tensor({3, 2}, 5), zc = random_tensor({3, 3}, 6);
  const auto& w = critic.ffn.params().get("out.weight").value;
  const auto& b = critic.ffn.params().get("out.bias").value;
  const Tensor s = critic_score(critic, zt, zc);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      double expected = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double aligned = b[c] + w[c * 2] * zt.at(k, 0) + w[c * 2 + 1] * zt.at(k, 1);
        expected += zc.at(i, c) * aligned;
      }
      EXPECT_NEAR(s.at(i, k), expected, 1e-13);
    }
}

TEST(Critic, DimensionMismatchIsInternalError) {
  const auto critic = CriticAligner::make(2, 3, {}, -1, 4);
  EXPECT_THROW(critic_score(critic, Tensor({2, 2}), Tensor({2, 4})), InternalError);
}

TEST(FactorNetwork, SharedCknMutationIsVisibleEverywhere) {
  auto ckn = std::make_shared<Backbone>(tiny_cnn(), 1);
  auto spec = tiny_cnn().narrowed(0.5);
  FactorNetwork a{0, ckn, std::make_shared<Backbone>(spec, 2), std::make_shared<TaskHead>(6, std::vector<std::size_t>{}, 3, 3),
                  std::make_shared<TaskHead>(6, std::vector<std::size_t>{}, 3, 4)};
  FactorNetwork b{1, ckn, std::make_shared<Backbone>(spec, 5), std::make_shared<TaskHead>(6, std::vector<std::size_t>{}, 2, 6),
                  std::make_shared<TaskHead>(6, std::vector<std::size_t>{}, 2, 7)};
  const Tensor x = random_tensor({2, 1, 16, 16}, 8);
  const Tensor before_a = a.predict(x), before_b = b.predict(x);
  a.ckn->params().items().front().value[0] += 0.5;
  EXPECT_EQ(a.ckn->params().digest(), b.ckn->params().digest());
  EXPECT_NE(a.predict(x), before_a);
  EXPECT_NE(b.predict(x), before_b);
}

TEST(MultiHeadNet, ConcatSlicesMatchPerTask) {
  const MultiHeadNet net(tiny_cnn(), {3, 2, 4}, 11);
  const Tensor x = random_tensor({3, 1, 16, 16}, 12);
  const auto per_task = net.forward(x);
  const Tensor all = net.forward_concat(x);
  ASSERT_EQ(all.dim(1), 9u);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto [b, e] = net.task_slice(j);
    EXPECT_EQ(all.slice_cols(b, e), per_task[j]);
  }
}

TEST(Pooling, UnpoolIsAdjointOfPool) {
  const Tensor a = random_tensor({2, 3, 4, 5}, 1);
  const Tensor g = random_tensor({2, 3}, 2);
  const Tensor pooled = nn::pool_features(a);
  const Tensor spread = nn::unpool_gradient(g, a.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += pooled[i] * g[i];
  for (std::size_t i = 0; i < a.size(); ++i) rhs += a[i] * spread[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}
