#include <gtest/gtest.h>

#include "kfactor/error.hpp"
#include "kfactor/losses.hpp"
#include "kfactor/mi.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace kf;
using namespace kf::loss;

namespace {

std::vector<double> softmax(std::vector<double> x, double t) {
  double m = -1e300, s = 0.0;
  for (double v : x) m = std::max(m, v / t);
  for (auto& v : x) s += (v = std::exp(v / t - m));
  for (auto& v : x) v /= s;
  return x;
}

// Independent KD oracle: T^2 * sum p ln(p / q) per row, averaged.
double kd_oracle(const std::vector<std::vector<double>>& teacher, const std::vector<std::vector<double>>& student,
                 double t) {
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const auto p = softmax(teacher[i], t), q = softmax(student[i], t);
    for (std::size_t k = 0; k < p.size(); ++k) total += p[k] * std::log(p[k] / q[k]);
  }
  return t * t * total / static_cast<double>(teacher.size());
}

Tensor rows(const std::vector<std::vector<double>>& r) {
  Tensor t({r.size(), r[0].size()});
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t k = 0; k < r[i].size(); ++k) t.at(i, k) = r[i][k];
  return t;
}

// KL(N(mu, var) || N(0, 1)) by Simpson quadrature of the density-ratio integral.
double kl_quadrature(double mu, double var) {
  const double sd = std::sqrt(var), lo = mu - 14 * sd, hi = mu + 14 * sd;
  const int panels = 4000;
  const double h = (hi - lo) / panels;
  auto f = [&](double x) {
    const double log_p = -0.5 * std::log(2 * M_PI * var) - (x - mu) * (x - mu) / (2 * var);
    const double log_q = -0.5 * std::log(2 * M_PI) - x * x / 2;
    return std::exp(log_p) * (log_p - log_q);
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) s += f(lo + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

GaussianStats stats(std::vector<double> mu, std::vector<double> var) {
  GaussianStats s;
  s.mu = Eigen::Map<Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  s.var = Eigen::Map<Vector>(var.data(), static_cast<Eigen::Index>(var.size()));
  return s;
}

}  // namespace

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  for (std::size_t k : {2u, 3u, 10u}) {
    const std::vector<int> labels{0, static_cast<int>(k - 1)};
    EXPECT_NEAR(cross_entropy(Tensor({2, k}, 0.7), labels).value, std::log(static_cast<double>(k)), 1e-14);
  }
}

TEST(CrossEntropy, ConfidentCorrectLogitsApproachZero) {
  Tensor logits({2, 3});
  logits.at(0, 1) = 60.0;
  logits.at(1, 2) = 60.0;
  const std::vector<int> labels{1, 2};
  EXPECT_LT(cross_entropy(logits, labels).value, 1e-20);
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  const std::vector<int> labels{0, 3};
  EXPECT_THROW(cross_entropy(Tensor({2, 3}), labels), InvalidArgument);
}

TEST(SupervisedLoss, RegressionExactPredictionIsZero) {
  const std::vector<int> targets{1, 2};
  EXPECT_EQ(supervised_loss(Tensor({2, 1}, {1.0, 2.0}), targets, TaskType::regression).value, 0.0);
}

TEST(SoftTargetKd, HandComputedTwoClassCase) {
  const double v = soft_target_kd(rows({{2, 0}}), rows({{0, 2}}), 1.0).value;
  EXPECT_NEAR(v, kd_oracle({{2, 0}}, {{0, 2}}, 1.0), 1e-12);
  EXPECT_NEAR(v, 1.5232, 5e-5);
}

TEST(SoftTargetKd, MatchesOracleOnRandomLogits) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 3.0);
  for (double t : {0.5, 1.0, 4.0, 10.0}) {
    std::vector<std::vector<double>> a(3, std::vector<double>(4)), b = a;
    for (auto& r : a)
      for (auto& x : r) x = g(rng);
    for (auto& r : b)
      for (auto& x : r) x = g(rng);
    EXPECT_NEAR(soft_target_kd(rows(a), rows(b), t).value, kd_oracle(a, b, t), 1e-10);
  }
}

TEST(SoftTargetKd, ZeroWhenStudentEqualsTeacher) {
  const auto logits = rows({{1.0, -2.0, 0.3}, {0.0, 5.0, 1.0}});
  for (double t : {0.1, 1.0, 10.0, 100.0}) EXPECT_NEAR(soft_target_kd(logits, logits, t).value, 0.0, 1e-12);
}

TEST(SoftTargetKd, ShrinksAsStudentApproachesTeacher) {
  const auto teacher = rows({{1.0, -2.0, 0.3}});
  for (double t : {1.0, 10.0}) {
    double prev = 1e300;
    for (double eps : {1.0, 0.1, 0.01, 0.001}) {
      const double v = soft_target_kd(teacher, rows({{1.0 + eps, -2.0, 0.3 - eps}}), t).value;
      EXPECT_LT(v, prev);
      EXPECT_GE(v, 0.0);
      prev = v;
    }
    EXPECT_LT(prev, 1e-5);
  }
}

TEST(SoftTargetKd, NonFiniteLogitsThrow) {
  EXPECT_THROW(soft_target_kd(rows({{NAN, 0.0}}), rows({{0.0, 0.0}}), 1.0), InvalidArgument);
}

TEST(KlToStandardNormal, ReferenceValues) {
  EXPECT_EQ(kl_to_standard_normal(stats({0, 0, 0}, {1, 1, 1})), 0.0);
  EXPECT_NEAR(kl_to_standard_normal(stats({1}, {1})), 0.5, 1e-15);
  EXPECT_NEAR(kl_to_standard_normal(stats({1}, {1})), kl_quadrature(1, 1), 1e-6);
  EXPECT_NEAR(kl_to_standard_normal(stats({0}, {0.25})), kl_quadrature(0, 0.25), 1e-6);
  EXPECT_NEAR(kl_to_standard_normal(stats({0}, {0.25})), 0.3181, 5e-5);
}

TEST(KlToStandardNormal, NonPositiveVarianceThrows) {
  EXPECT_THROW(kl_to_standard_normal(stats({0}, {0.0})), InvalidArgument);
}

TEST(KlToStandardNormal, GradientIsAnalytic) {
  const auto g = kl_to_standard_normal_grad(stats({0.3, -1.0}, {0.5, 2.0}));
  EXPECT_DOUBLE_EQ(g.d_mu(0), 0.3);
  EXPECT_DOUBLE_EQ(g.d_mu(1), -1.0);
  EXPECT_DOUBLE_EQ(g.d_var(0), 0.5 * (1 - 1 / 0.5));
  EXPECT_DOUBLE_EQ(g.d_var(1), 0.5 * (1 - 1 / 2.0));
}

TEST(GaussianStats, ChannelwiseAcrossBatchAndSpace) {
  // N=2, C=2, 1x2 spatial: channel 0 values {1,3,5,7}, channel 1 values {0,0,2,2}.
  const Tensor f({2, 2, 1, 2}, {1, 3, 0, 0, 5, 7, 2, 2});
  const auto s = gaussian_stats(f);
  EXPECT_DOUBLE_EQ(s.mu(0), 4.0);
  EXPECT_DOUBLE_EQ(s.var(0), 5.0);
  EXPECT_DOUBLE_EQ(s.mu(1), 1.0);
  EXPECT_DOUBLE_EQ(s.var(1), 1.0);
}

TEST(GaussianStats, VarianceIsFloored) {
  const auto s = gaussian_stats(Tensor({3, 2}, 1.5));
  EXPECT_EQ(s.var(0), kVarianceFloor);
  EXPECT_TRUE(std::isfinite(kl_to_standard_normal(s)));
}

TEST(DvLowerBound, ConstantScoresGiveZero) {
  EXPECT_NEAR(dv_lower_bound(Tensor({4, 4}, 2.5)).value, 0.0, 1e-14);
}

TEST(DvLowerBound, SmallBatchThrows) {
  EXPECT_THROW(dv_lower_bound(Tensor({1, 1})), InvalidArgument);
  EXPECT_THROW(dv_lower_bound(Tensor({2, 3})), InvalidArgument);
}

TEST(DvLowerBound, OptimalCriticRecoversMi) {
  RowMatrix p(2, 2);
  p << 0.4, 0.1, 0.1, 0.4;
  const mi::JointTable table(p);
  const RowMatrix critic = mi::optimal_critic(table);
  const double dv = dv_lower_bound(critic, table.p(), table.independent());
  const double direct = 0.8 * std::log(1.6) + 0.2 * std::log(0.4);
  EXPECT_NEAR(dv, direct, 1e-12);
  EXPECT_NEAR(dv, 0.1927, 5e-5);
}

TEST(DvLowerBound, BatchFormIsWeightedFormWithEmpiricalWeights) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  RowMatrix s(5, 5);
  for (auto& v : s.reshaped()) v = g(rng);
  Tensor t = Tensor::from_matrix(s);
  const RowMatrix joint = RowMatrix::Identity(5, 5) / 5.0;
  const RowMatrix marginal = RowMatrix::Constant(5, 5, 1.0 / 25.0);
  EXPECT_NEAR(dv_lower_bound(t).value, dv_lower_bound(s, joint, marginal), 1e-13);
}

TEST(DvLowerBound, NeverExceedsExactMi) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    RowMatrix p(3, 3);
    for (auto& v : p.reshaped()) v = u(rng);
    p /= p.sum();
    const mi::JointTable table(p);
    RowMatrix critic(3, 3);
    for (auto& v : critic.reshaped()) v = g(rng);
    EXPECT_LE(dv_lower_bound(critic, table.p(), table.independent()), mi::exact_mi_discrete(table) + 1e-9);
  }
}

TEST(ImbLoss, Arithmetic) {
  FactorizationConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta = 1e-3;
  EXPECT_NEAR(imb_loss(0.2, 0.1, 3.0, cfg), -0.2 + 1.0 * 0.1 - 1e-3 * 3.0, 1e-15);
  EXPECT_NEAR(imb_loss(0.2, 0.1, 3.0, cfg), -0.103, 1e-15);
  cfg.alpha = cfg.beta = 0.0;
  EXPECT_EQ(imb_loss(0.7, 5.0, 9.0, cfg), -0.7);
  EXPECT_EQ(imb_loss(0.0, 0.0, 0.0, FactorizationConfig{}), 0.0);
}

TEST(TotalObjective, ReducesToSupervisedWithoutTransferOrImb) {
  FactorizationConfig cfg;
  cfg.lambda_kt = cfg.lambda_I = 0.0;
  const double sup = 0.42;
  const std::vector<double> sf{structural_loss(sup, 9.0, cfg)}, imb{-3.0};
  EXPECT_EQ(total_objective(sf, imb, cfg), sup);
}

TEST(TotalObjective, TwoTaskArithmetic) {
  FactorizationConfig cfg;
  cfg.lambda_kt = 0.5;
  cfg.lambda_I = 2.0;
  const std::vector<double> sf{structural_loss(1.0, 0.4, cfg), structural_loss(0.5, 0.2, cfg)};
  const std::vector<double> imb{-0.3, 0.1};
  EXPECT_NEAR(total_objective(sf, imb, cfg), (1.0 + 0.5 * 0.4) + (0.5 + 0.5 * 0.2) - 2.0 * (-0.3 + 0.1), 1e-15);
}

TEST(TotalObjective, EmptyTaskListThrows) {
  EXPECT_THROW(total_objective({}, {}, FactorizationConfig{}), InvalidArgument);
}

TEST(Nonnegativity, RandomInputs) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a({3, 4}), b({3, 4});
    for (auto& v : a.values()) v = g(rng);
    for (auto& v : b.values()) v = g(rng);
    const std::vector<int> labels{0, 1, 3};
    EXPECT_GE(cross_entropy(a, labels).value, 0.0);
    EXPECT_GE(soft_target_kd(a, b, u(rng)).value, 0.0);
    EXPECT_GE(kl_to_standard_normal(stats({g(rng), g(rng)}, {u(rng), u(rng)})), 0.0);
  }
}

TEST(FactorizationConfig, ValidationNamesField) {
  FactorizationConfig cfg;
  cfg.alpha = -1.0;
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "factorization.alpha");
  }
}
