#pragma once

// First-order optimizers over one or more ParameterSets.

#include "kfactor/nn.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace kf::optim {

enum class OptimizerKind { sgd_momentum, adam };
enum class ScheduleKind { none, step, cosine, poly };

std::string to_string(OptimizerKind kind);
std::string to_string(ScheduleKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);
ScheduleKind schedule_kind_from_string(const std::string& name);

struct OptimConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // L2 penalty added to the gradient
  ScheduleKind schedule = ScheduleKind::none;
  std::size_t step_size = 1000;  // step: decay every step_size steps
  double gamma = 0.1;            // step: multiplicative decay
  double poly_power = 0.9;       // poly: (1 - t/T)^power
  double clip_norm = 10.0;       // global gradient-norm clip; <= 0 disables

  void validate() const;
  bool operator==(const OptimConfig&) const = default;
};

/// Learning rate at `step` (0-based) of a run lasting `total_steps`.
double scheduled_lr(const OptimConfig& cfg, std::size_t step, std::size_t total_steps);

/// Global L2 norm of all gradients.
double grad_norm(const std::vector<nn::ParameterSet*>& sets);
/// Rescales gradients so their global norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(const std::vector<nn::ParameterSet*>& sets, double max_norm);

class Optimizer {
 public:
  Optimizer(OptimConfig cfg, std::vector<nn::ParameterSet*> sets, std::size_t total_steps);

  void zero_grad();
  /// Clips, applies one update and advances the schedule; returns the pre-clip gradient norm.
  double step();

  std::size_t steps_taken() const noexcept { return t_; }
  double current_lr() const { return scheduled_lr(cfg_, t_, total_steps_); }

 private:
  OptimConfig cfg_;
  std::vector<nn::ParameterSet*> sets_;
  std::size_t total_steps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;  // first/second moments (momentum buffer uses m_)
};

}  // namespace kf::optim
