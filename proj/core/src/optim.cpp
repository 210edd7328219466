#include "kfactor/optim.hpp"

#include "kfactor/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kf::optim {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::none: return "none";
    case ScheduleKind::step: return "step";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::poly: return "poly";
  }
  return "none";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "none") return ScheduleKind::none;
  if (name == "step") return ScheduleKind::step;
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "poly") return ScheduleKind::poly;
  throw InvalidArgument("unknown lr schedule '" + name + "'");
}

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("optimizer: learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("optimizer: weight decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("optimizer: momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("optimizer: betas must be in [0, 1)");
  if (schedule == ScheduleKind::step && step_size == 0) throw InvalidArgument("optimizer: step schedule needs step_size > 0");
}

double scheduled_lr(const OptimConfig& cfg, std::size_t step, std::size_t total_steps) {
  const double progress = total_steps == 0 ? 0.0 : std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  switch (cfg.schedule) {
    case ScheduleKind::none: return cfg.lr;
    case ScheduleKind::step: return cfg.lr * std::pow(cfg.gamma, static_cast<double>(step / cfg.step_size));
    case ScheduleKind::cosine: return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * progress));
    case ScheduleKind::poly: return cfg.lr * std::pow(1.0 - progress, cfg.poly_power);
  }
  return cfg.lr;
}

double grad_norm(const std::vector<nn::ParameterSet*>& sets) {
  double sq = 0.0;
  for (const auto* set : sets)
    for (const auto& p : set->items()) sq += p.grad.matrix().squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<nn::ParameterSet*>& sets, double max_norm) {
  const double norm = grad_norm(sets);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* set : sets)
      for (auto& p : set->items()) p.grad *= scale;
  }
  return norm;
}

Optimizer::Optimizer(OptimConfig cfg, std::vector<nn::ParameterSet*> sets, std::size_t total_steps)
    : cfg_(cfg), sets_(std::move(sets)), total_steps_(total_steps) {
  cfg_.validate();
  for (const auto* set : sets_)
    for (const auto& p : set->items()) {
      m_.emplace_back(p.value.shape());
      if (cfg_.kind == OptimizerKind::adam) v_.emplace_back(p.value.shape());
    }
}

void Optimizer::zero_grad() {
  for (auto* set : sets_) set->zero_grad();
}

double Optimizer::step() {
  const double norm = clip_grad_norm(sets_, cfg_.clip_norm);
  const double lr = current_lr();
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto* set : sets_) {
    for (auto& p : set->items()) {
      auto w = p.value.matrix().array();
      auto m = m_[k].matrix().array();
      const auto g = p.grad.matrix().array() + cfg_.weight_decay * w;
      if (cfg_.kind == OptimizerKind::adam) {
        auto v = v_[k].matrix().array();
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
        w -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
      } else {
        m = cfg_.momentum * m + g;
        w -= lr * m;
      }
      ++k;
    }
  }
  return norm;
}

}  // namespace kf::optim
