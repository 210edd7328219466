#pragma once

// Backbones (teacher, CKN, TSN), task heads, and the critic's alignment network.

#include "kfactor/nn.hpp"
#include "kfactor/tensor.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kf::models {

enum class BackboneKind { cnn6, cnn3, mlp };

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& name);

/// Architecture of a feature extractor.
///
/// cnn6: six Conv(4x4, stride 2, pad 1)-ReLU blocks, flattened.
/// cnn3: three Conv(4x4, stride 2, pad 1)-ReLU blocks, global average pooled.
/// mlp:  flattened input followed by Linear-ReLU blocks of the given widths.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::cnn3;
  std::size_t in_channels = 1;
  std::size_t in_height = 64;
  std::size_t in_width = 64;
  std::vector<std::size_t> widths{32, 32, 64};

  static BackboneSpec cnn6(std::size_t channels, std::size_t height, std::size_t width);
  static BackboneSpec cnn3(std::size_t channels, std::size_t height, std::size_t width);
  static BackboneSpec mlp(std::size_t channels, std::size_t height, std::size_t width,
                          std::vector<std::size_t> widths);

  /// Every width scaled by `factor` (at least 1), except the last which is
  /// kept so the output dimension is unchanged.
  BackboneSpec narrowed(double factor) const;

  void validate() const;
  std::size_t num_blocks() const noexcept { return widths.size(); }
  Shape input_shape() const { return {in_channels, in_height, in_width}; }
  std::size_t feature_dim() const;
  /// Dimension of the pooled feature of block `block` (0-based; negative = final feature).
  std::size_t block_feature_dim(int block) const;

  bool operator==(const BackboneSpec&) const = default;
};

std::string to_json(const BackboneSpec& spec);
BackboneSpec backbone_spec_from_json(const std::string& json);

/// Activations kept from a forward pass for the backward pass.
struct Trace {
  std::vector<Tensor> activations;  // activations[0] is the input, [i+1] the output of layer i
};

struct BlockGradient {
  int block;      // 0-based block index
  Tensor pooled;  // gradient w.r.t. the pooled block feature (N x C)
};

/// Sequential network with its own parameter set.
class Sequential {
 public:
  Sequential() = default;
  Sequential(std::vector<nn::LayerPtr> layers, std::vector<std::size_t> block_ends, Shape input_shape);

  nn::ParameterSet& params() noexcept { return params_; }
  const nn::ParameterSet& params() const noexcept { return params_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t num_blocks() const noexcept { return block_ends_.size(); }

  void init(std::uint64_t seed);

  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  /// Pooled output of block `block` (negative = final output) from a trace.
  Tensor block_feature(const Trace& trace, int block) const;
  /// Accumulates parameter gradients; returns d(input) if `need_input_grad`.
  Tensor backward(const Trace& trace, const Tensor& d_output, const std::vector<BlockGradient>& extra = {},
                  bool need_input_grad = false);

  std::size_t macs_per_sample() const;

 private:
  void check_input(const Tensor& x) const;

  std::vector<nn::LayerPtr> layers_;
  std::vector<std::size_t> block_ends_;
  Shape input_shape_;
  nn::ParameterSet params_;
};

/// Feature extractor S(x) with an instrumented forward-call counter.
class Backbone {
 public:
  Backbone(BackboneSpec spec, std::uint64_t seed);
  Backbone(BackboneSpec spec, nn::ParameterSet params);
  Backbone(const Backbone& other);
  Backbone& operator=(const Backbone& other);

  const BackboneSpec& spec() const noexcept { return spec_; }
  nn::ParameterSet& params() noexcept { return net_.params(); }
  const nn::ParameterSet& params() const noexcept { return net_.params(); }

  Tensor forward(const Tensor& batch, Trace* trace = nullptr) const;
  Tensor block_feature(const Trace& trace, int block) const { return net_.block_feature(trace, block); }
  Tensor backward(const Trace& trace, const Tensor& d_features, const std::vector<BlockGradient>& extra = {},
                  bool need_input_grad = false) {
    return net_.backward(trace, d_features, extra, need_input_grad);
  }

  std::size_t parameter_count() const { return net_.params().scalar_count(); }
  std::size_t macs_per_sample() const { return net_.macs_per_sample(); }
  std::size_t forward_calls() const noexcept { return forward_calls_.load(); }
  void reset_forward_calls() noexcept { forward_calls_ = 0; }

 private:
  static Sequential build(const BackboneSpec& spec);

  BackboneSpec spec_;
  Sequential net_;
  mutable std::atomic<std::size_t> forward_calls_{0};
};

/// Multi-layer perceptron; with no hidden widths it is a single affine map.
class Mlp {
 public:
  Mlp(std::size_t in_dim, std::vector<std::size_t> hidden, std::size_t out_dim, std::uint64_t seed);
  Mlp(std::size_t in_dim, std::vector<std::size_t> hidden, std::size_t out_dim, nn::ParameterSet params);

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  nn::ParameterSet& params() noexcept { return net_.params(); }
  const nn::ParameterSet& params() const noexcept { return net_.params(); }

  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  Tensor backward(const Trace& trace, const Tensor& d_out, bool need_input_grad = true) {
    return net_.backward(trace, d_out, {}, need_input_grad);
  }
  std::size_t parameter_count() const { return net_.params().scalar_count(); }

 private:
  static Sequential build(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim);

  std::size_t in_dim_, out_dim_;
  std::vector<std::size_t> hidden_;
  Sequential net_;
};

using TaskHead = Mlp;

/// f(x, z_C) = <z_C, FFN(z_T)>, with FFN mapping teacher features (d_T) to CKN features (d_C).
struct CriticAligner {
  Mlp ffn;
  int layer_index = -1;  // block whose features are matched; negative = final feature

  static CriticAligner make(std::size_t teacher_dim, std::size_t ckn_dim, std::vector<std::size_t> hidden,
                            int layer_index, std::uint64_t seed);
};

/// One task's student: shared CKN, own TSN, fused head on z + t, auxiliary head on t.
struct FactorNetwork {
  int task_id = 0;
  std::shared_ptr<Backbone> ckn;
  std::shared_ptr<Backbone> tsn;
  std::shared_ptr<TaskHead> head;
  std::shared_ptr<TaskHead> aux_head;

  /// head(ckn(x) + tsn(x)); evaluation mode.
  Tensor predict(const Tensor& batch) const;
  /// TSN + fused head; the per-task cost on top of the shared CKN.
  std::size_t branch_parameter_count() const;
};

/// Backbone plus one linear head per task. Used for the teacher and for all
/// baseline students (multi-task, single-task, distilled).
class MultiHeadNet {
 public:
  MultiHeadNet(BackboneSpec spec, std::vector<std::size_t> task_classes, std::uint64_t seed);
  MultiHeadNet(Backbone backbone, std::vector<TaskHead> heads);

  Backbone& backbone() noexcept { return backbone_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  std::vector<TaskHead>& heads() noexcept { return heads_; }
  const std::vector<TaskHead>& heads() const noexcept { return heads_; }
  std::size_t num_tasks() const noexcept { return heads_.size(); }

  /// Per-task logits in evaluation mode.
  std::vector<Tensor> forward(const Tensor& batch) const;
  /// Concatenated task logits (N x sum of class counts).
  Tensor forward_concat(const Tensor& batch) const;
  /// Column range of task `task` inside forward_concat's output.
  std::pair<std::size_t, std::size_t> task_slice(std::size_t task) const;

  std::string digest() const;
  std::vector<nn::ParameterSet*> parameter_sets();

 private:
  Backbone backbone_;
  std::vector<TaskHead> heads_;
};

// Operation-level entry points.

Tensor forward_ckn(const Backbone& ckn, const Tensor& batch);
Tensor forward_tsn(const Backbone& tsn, const Tensor& batch);
/// H_j(z + t_j).
Tensor forward_head(const TaskHead& head, const Tensor& z, const Tensor& t);
Tensor forward_aux_head(const TaskHead& aux_head, const Tensor& t);

/// Score matrix S with S(i, k) = <z_C[i], FFN(z_T[k])>.
Tensor critic_score(const CriticAligner& aligner, const Tensor& teacher_features, const Tensor& ckn_features);

struct CriticGradients {
  Tensor d_ckn_features;  // n x d_C
};
/// Backward of critic_score; accumulates FFN parameter gradients.
CriticGradients critic_score_backward(CriticAligner& aligner, const Tensor& teacher_features,
                                      const Tensor& ckn_features, const Tensor& d_scores);

Backbone init_params(const BackboneSpec& spec, std::uint64_t seed);

}  // namespace kf::models
