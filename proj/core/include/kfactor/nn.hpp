#pragma once

// Minimal layer library with explicit forward/backward passes.
//
// Layers are immutable descriptors; all trainable state lives in a
// ParameterSet that is passed in. Backward passes accumulate into the
// `grad` tensors of that set and return the gradient w.r.t. the layer input.

#include "kfactor/tensor.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace kf::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter>& items() noexcept { return params_; }
  const std::vector<Parameter>& items() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  /// Total number of scalar parameters.
  std::size_t scalar_count() const;
  void zero_grad();
  /// SHA-256 over names, shapes and raw values.
  std::string digest() const;

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<Parameter> params_;
};

class Layer {
 public:
  virtual ~Layer() = default;
  /// Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual void init(ParameterSet&, std::mt19937_64&) const {}
  virtual Tensor forward(const ParameterSet& params, const Tensor& x) const = 0;
  virtual Tensor backward(ParameterSet& params, const Tensor& x, const Tensor& y, const Tensor& dy,
                          bool need_dx) const = 0;
  /// Multiply-accumulates per sample, for cost accounting.
  virtual std::size_t macs(const Shape&) const { return 0; }
};

using LayerPtr = std::shared_ptr<const Layer>;

class Conv2d final : public Layer {
 public:
  Conv2d(std::string prefix, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t padding);

  Shape output_shape(const Shape& input) const override;
  void init(ParameterSet& params, std::mt19937_64& rng) const override;
  Tensor forward(const ParameterSet& params, const Tensor& x) const override;
  Tensor backward(ParameterSet& params, const Tensor& x, const Tensor& y, const Tensor& dy,
                  bool need_dx) const override;
  std::size_t macs(const Shape& input) const override;

  const std::string& weight_name() const noexcept { return weight_; }
  const std::string& bias_name() const noexcept { return bias_; }

 private:
  std::string weight_, bias_;
  std::size_t in_c_, out_c_, k_, stride_, pad_;
};

class Linear final : public Layer {
 public:
  Linear(std::string prefix, std::size_t in_features, std::size_t out_features);

  Shape output_shape(const Shape& input) const override;
  void init(ParameterSet& params, std::mt19937_64& rng) const override;
  Tensor forward(const ParameterSet& params, const Tensor& x) const override;
  Tensor backward(ParameterSet& params, const Tensor& x, const Tensor& y, const Tensor& dy,
                  bool need_dx) const override;
  std::size_t macs(const Shape& input) const override;

  const std::string& weight_name() const noexcept { return weight_; }
  const std::string& bias_name() const noexcept { return bias_; }

 private:
  std::string weight_, bias_;
  std::size_t in_, out_;
};

class Relu final : public Layer {
 public:
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const ParameterSet&, const Tensor& x) const override;
  Tensor backward(ParameterSet&, const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) const override;
};

/// (N, C, H, W) -> (N, C)
class GlobalAvgPool final : public Layer {
 public:
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const ParameterSet&, const Tensor& x) const override;
  Tensor backward(ParameterSet&, const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) const override;
};

/// (N, ...) -> (N, prod(...))
class Flatten final : public Layer {
 public:
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const ParameterSet&, const Tensor& x) const override;
  Tensor backward(ParameterSet&, const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) const override;
};

/// Channel-wise spatial mean of an (N, C, H, W) or pass-through of an (N, D) tensor.
Tensor pool_features(const Tensor& activation);
/// Adjoint of pool_features: spreads (N, C) gradients over (N, C, H, W).
Tensor unpool_gradient(const Tensor& pooled_grad, const Shape& activation_shape);

}  // namespace kf::nn
