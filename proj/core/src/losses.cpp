#include "kfactor/losses.hpp"

#include "kfactor/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace kf::loss {

std::string to_string(TaskType type) { return type == TaskType::classification ? "classification" : "regression"; }

TaskType task_type_from_string(const std::string& name) {
  if (name == "classification") return TaskType::classification;
  if (name == "regression") return TaskType::regression;
  throw InvalidArgument("unknown task type '" + name + "'");
}

void FactorizationConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("factorization.alpha", "must be > 0");
  if (!(beta > 0.0)) throw ConfigError("factorization.beta", "must be > 0");
  if (!(lambda_I >= 0.0)) throw ConfigError("factorization.lambda_I", "must be >= 0");
  if (!(lambda_kt >= 0.0)) throw ConfigError("factorization.lambda_kt", "must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("factorization.temperature", "must be > 0");
}

namespace {

void require_logits(const Tensor& t, const char* what) {
  if (t.rank() != 2 || t.dim(0) == 0 || t.dim(1) == 0) throw InvalidArgument(std::string(what) + ": expected N x C");
}

// Row-wise softmax of logits / T, plus the row log-partition.
RowMatrix softmax_rows(const ConstMatrixView& logits, double temperature, Vector* log_z = nullptr) {
  RowMatrix scaled = logits / temperature;
  const Vector row_max = scaled.rowwise().maxCoeff();
  scaled.colwise() -= row_max;
  RowMatrix p = scaled.array().exp();
  const Vector sums = p.rowwise().sum();
  p.array().colwise() /= sums.array();
  if (log_z) *log_z = row_max.array() + sums.array().log();
  return p;
}

}  // namespace

LossValue cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_logits(logits, "cross-entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw InvalidArgument("cross-entropy: label count does not match batch");
  Vector log_z;
  const RowMatrix p = softmax_rows(logits.matrix(), 1.0, &log_z);
  LossValue out{0.0, Tensor(logits.shape())};
  auto g = out.grad.matrix();
  g = p / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw InvalidArgument("cross-entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    out.value += log_z[static_cast<Eigen::Index>(i)] - logits.at(i, static_cast<std::size_t>(y));
    g(static_cast<Eigen::Index>(i), y) -= 1.0 / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

LossValue mean_squared_error(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mean squared error");
  if (prediction.empty()) throw InvalidArgument("mean squared error: empty input");
  const double m = static_cast<double>(prediction.size());
  LossValue out{0.0, Tensor(prediction.shape())};
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    out.value += d * d;
    out.grad[i] = 2.0 * d / m;
  }
  out.value /= m;
  return out;
}

LossValue supervised_loss(const Tensor& prediction, std::span<const int> labels, TaskType type) {
  if (type == TaskType::classification) return cross_entropy(prediction, labels);
  if (prediction.rank() != 2 || prediction.dim(1) != 1 || prediction.dim(0) != labels.size()) {
    throw InvalidArgument("regression loss: expected N x 1 prediction matching the labels");
  }
  Tensor target(prediction.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) target[i] = labels[i];
  return mean_squared_error(prediction, target);
}

LossValue soft_target_kd(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
  require_logits(student_logits, "soft-target KD");
  require_same_shape(teacher_logits, student_logits, "soft-target KD");
  if (!(temperature > 0.0)) throw InvalidArgument("soft-target KD: temperature must be > 0");
  if (!teacher_logits.all_finite() || !student_logits.all_finite()) {
    throw InvalidArgument("soft-target KD: non-finite logits");
  }
  const double n = static_cast<double>(student_logits.dim(0));
  Vector log_zt, log_zs;
  const RowMatrix pt = softmax_rows(teacher_logits.matrix(), temperature, &log_zt);
  const RowMatrix ps = softmax_rows(student_logits.matrix(), temperature, &log_zs);
  // log p = logit/T - log Z, computed directly to avoid log(0).
  RowMatrix log_pt = teacher_logits.matrix() / temperature;
  log_pt.colwise() -= log_zt;
  RowMatrix log_ps = student_logits.matrix() / temperature;
  log_ps.colwise() -= log_zs;

  LossValue out{0.0, Tensor(student_logits.shape())};
  const double kl = (pt.array() * (log_pt - log_ps).array()).sum() / n;
  out.value = std::max(0.0, temperature * temperature * kl);
  out.grad.matrix() = (temperature / n) * (ps - pt);
  return out;
}

GaussianStats gaussian_stats(const Tensor& features) {
  if (features.rank() != 2 && features.rank() != 4) throw InvalidArgument("gaussian stats: expected N x L or N x C x H x W");
  const std::size_t n = features.dim(0), c = features.dim(1);
  const std::size_t spatial = features.rank() == 4 ? features.dim(2) * features.dim(3) : 1;
  const double count = static_cast<double>(n * spatial);
  if (n == 0) throw InvalidArgument("gaussian stats: empty batch");
  GaussianStats s{Vector::Zero(static_cast<Eigen::Index>(c)), Vector::Zero(static_cast<Eigen::Index>(c))};
  const double* x = features.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < spatial; ++p) s.mu[static_cast<Eigen::Index>(ch)] += x[(i * c + ch) * spatial + p];
  s.mu /= count;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < spatial; ++p) {
        const double d = x[(i * c + ch) * spatial + p] - s.mu[static_cast<Eigen::Index>(ch)];
        s.var[static_cast<Eigen::Index>(ch)] += d * d;
      }
  s.var /= count;
  s.var = s.var.cwiseMax(kVarianceFloor);
  return s;
}

double kl_to_standard_normal(const GaussianStats& stats) {
  if (stats.mu.size() != stats.var.size()) throw InvalidArgument("KL: mean/variance length mismatch");
  if ((stats.var.array() <= 0.0).any()) throw InvalidArgument("KL: variance must be positive");
  return 0.5 * (stats.mu.array().square() + stats.var.array() - stats.var.array().log() - 1.0).sum();
}

KlGradient kl_to_standard_normal_grad(const GaussianStats& stats) {
  if ((stats.var.array() <= 0.0).any()) throw InvalidArgument("KL: variance must be positive");
  return {stats.mu, 0.5 * (1.0 - stats.var.array().inverse()).matrix()};
}

LossValue feature_kl(const Tensor& features) {
  const GaussianStats s = gaussian_stats(features);
  const KlGradient g = kl_to_standard_normal_grad(s);
  const std::size_t n = features.dim(0), c = features.dim(1);
  const std::size_t spatial = features.rank() == 4 ? features.dim(2) * features.dim(3) : 1;
  const double count = static_cast<double>(n * spatial);
  LossValue out{kl_to_standard_normal(s), Tensor(features.shape())};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto e = static_cast<Eigen::Index>(ch);
      const double d_var = s.var[e] > kVarianceFloor ? g.d_var[e] : 0.0;
      for (std::size_t p = 0; p < spatial; ++p) {
        const std::size_t k = (i * c + ch) * spatial + p;
        out.grad[k] = (g.d_mu[e] + 2.0 * d_var * (features[k] - s.mu[e])) / count;
      }
    }
  return out;
}

LossValue dv_lower_bound(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) throw InvalidArgument("DV bound: expected n x n scores");
  const std::size_t n = scores.dim(0);
  if (n < 2) throw InvalidArgument("DV bound: need n >= 2");
  const auto s = scores.matrix();
  const double nd = static_cast<double>(n);
  const double m = s.maxCoeff();
  const RowMatrix w = (s.array() - m).exp();
  const double sum = w.sum();
  LossValue out;
  out.value = s.diagonal().mean() - (m + std::log(sum / (nd * nd)));
  out.grad = Tensor(scores.shape());
  out.grad.matrix() = -w / sum;
  out.grad.matrix().diagonal().array() += 1.0 / nd;
  return out;
}

double dv_lower_bound(const RowMatrix& scores, const RowMatrix& joint_weights, const RowMatrix& marginal_weights) {
  if (scores.rows() != joint_weights.rows() || scores.cols() != joint_weights.cols() ||
      scores.rows() != marginal_weights.rows() || scores.cols() != marginal_weights.cols()) {
    throw InvalidArgument("DV bound: weight shapes must match the score matrix");
  }
  double joint = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (joint_weights(i, j) > 0.0) joint += joint_weights(i, j) * scores(i, j);
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (marginal_weights.data()[i] > 0.0) m = std::max(m, scores.data()[i]);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (marginal_weights.data()[i] > 0.0) sum += marginal_weights.data()[i] * std::exp(scores.data()[i] - m);
  return joint - (m + std::log(sum));
}

double imb_loss(double term1_pred_loss, double dv_bound, double kl_term, const FactorizationConfig& cfg) {
  return -term1_pred_loss + cfg.alpha * dv_bound - cfg.beta * kl_term;
}

double structural_loss(double supervised, double transfer, const FactorizationConfig& cfg) {
  return supervised + cfg.lambda_kt * transfer;
}

double total_objective(std::span<const double> structural, std::span<const double> imb,
                       const FactorizationConfig& cfg) {
  if (structural.empty()) throw InvalidArgument("total objective: empty task list");
  if (structural.size() != imb.size()) throw InvalidArgument("total objective: per-task list lengths differ");
  return std::accumulate(structural.begin(), structural.end(), 0.0) -
         cfg.lambda_I * std::accumulate(imb.begin(), imb.end(), 0.0);
}

}  // namespace kf::loss
