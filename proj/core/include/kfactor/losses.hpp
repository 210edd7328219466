#pragma once

// Training objectives. Every loss returns its value together with the
// gradient w.r.t. its primary tensor input so the trainer can chain it into
// the network backward passes.

#include "kfactor/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace kf::loss {

enum class TaskType { classification, regression };

std::string to_string(TaskType type);
TaskType task_type_from_string(const std::string& name);

struct FactorizationConfig {
  double alpha = 1.0;         // weight of the CKN information term I(X, Z)
  double beta = 1e-3;         // weight of the TSN compression term I(X, T_j)
  double lambda_I = 1.0;      // weight of the IMB objective in the total loss
  double lambda_kt = 0.1;     // weight of the knowledge-transfer term
  double temperature = 10.0;  // soft-target temperature
  int critic_layer = -1;      // feature block matched by the critic; negative = final
  std::vector<TaskType> task_types;  // empty = all classification

  void validate() const;
  bool operator==(const FactorizationConfig&) const = default;
};

struct LossValue {
  double value = 0.0;
  Tensor grad;  // d(value)/d(input), same shape as the input
};

/// Mean cross-entropy (nats) of N x C logits against class ids.
LossValue cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Mean over all elements of (prediction - target)^2.
LossValue mean_squared_error(const Tensor& prediction, const Tensor& target);
/// Cross-entropy for classification; for regression the labels are the
/// scalar targets of an N x 1 prediction.
LossValue supervised_loss(const Tensor& prediction, std::span<const int> labels, TaskType type);

/// T^2 * KL(softmax(teacher/T) || softmax(student/T)), mean over the batch.
/// The gradient is w.r.t. the student logits.
LossValue soft_target_kd(const Tensor& teacher_logits, const Tensor& student_logits, double temperature);

inline constexpr double kVarianceFloor = 1e-8;

struct GaussianStats {
  Vector mu;
  Vector var;  // floored at kVarianceFloor
};

/// Per-channel mean and population variance across the batch (and spatial
/// positions for N x C x H x W inputs).
GaussianStats gaussian_stats(const Tensor& features);

/// 1/2 * sum_l (mu_l^2 + var_l - ln var_l - 1).
double kl_to_standard_normal(const GaussianStats& stats);

struct KlGradient {
  Vector d_mu;
  Vector d_var;
};
KlGradient kl_to_standard_normal_grad(const GaussianStats& stats);

/// kl_to_standard_normal(gaussian_stats(features)) with the gradient w.r.t.
/// the features. Channels whose variance hits the floor get no variance gradient.
LossValue feature_kl(const Tensor& features);

/// Donsker-Varadhan bound on an n x n critic score matrix: mean of the
/// diagonal minus the log-mean-exp over all n^2 entries.
LossValue dv_lower_bound(const Tensor& scores);

/// Weighted DV bound: sum(joint .* f) - log sum(marginal .* exp f). Both weight
/// matrices must be nonnegative and sum to one.
double dv_lower_bound(const RowMatrix& scores, const RowMatrix& joint_weights, const RowMatrix& marginal_weights);

/// -term1 + alpha * dv - beta * kl; the quantity to maximize.
double imb_loss(double term1_pred_loss, double dv_bound, double kl_term, const FactorizationConfig& cfg);

/// L_sup + lambda_kt * L_kt.
double structural_loss(double supervised, double transfer, const FactorizationConfig& cfg);

/// sum_j L_sf^(j) - lambda_I * sum_j L_I^(j).
double total_objective(std::span<const double> structural, std::span<const double> imb,
                       const FactorizationConfig& cfg);

}  // namespace kf::loss
