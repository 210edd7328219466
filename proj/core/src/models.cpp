#include "kfactor/models.hpp"

#include "kfactor/digest.hpp"
#include "kfactor/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace kf::models {

using nlohmann::json;

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::cnn6: return "cnn6";
    case BackboneKind::cnn3: return "cnn3";
    case BackboneKind::mlp: return "mlp";
  }
  return "?";
}

BackboneKind backbone_kind_from_string(const std::string& name) {
  if (name == "cnn6") return BackboneKind::cnn6;
  if (name == "cnn3") return BackboneKind::cnn3;
  if (name == "mlp") return BackboneKind::mlp;
  throw InvalidArgument("unknown backbone kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// BackboneSpec

namespace {

constexpr std::size_t kKernel = 4, kStride = 2, kPad = 1;

std::size_t halve(std::size_t in) { return in + 2 * kPad < kKernel ? 0 : (in + 2 * kPad - kKernel) / kStride + 1; }

}  // namespace

BackboneSpec BackboneSpec::cnn6(std::size_t channels, std::size_t height, std::size_t width) {
  return {BackboneKind::cnn6, channels, height, width, {32, 32, 64, 128, 256, 256}};
}

BackboneSpec BackboneSpec::cnn3(std::size_t channels, std::size_t height, std::size_t width) {
  return {BackboneKind::cnn3, channels, height, width, {32, 32, 64}};
}

BackboneSpec BackboneSpec::mlp(std::size_t channels, std::size_t height, std::size_t width,
                               std::vector<std::size_t> widths) {
  return {BackboneKind::mlp, channels, height, width, std::move(widths)};
}

BackboneSpec BackboneSpec::narrowed(double factor) const {
  BackboneSpec out = *this;
  for (std::size_t i = 0; i + 1 < out.widths.size(); ++i) {
    out.widths[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(widths[i]) * factor)));
  }
  return out;
}

void BackboneSpec::validate() const {
  if (in_channels == 0 || in_height == 0 || in_width == 0) throw InvalidArgument("backbone: empty input shape");
  if (widths.empty()) throw InvalidArgument("backbone: no layers");
  if (std::any_of(widths.begin(), widths.end(), [](std::size_t w) { return w == 0; })) {
    throw InvalidArgument("backbone: zero layer width");
  }
  if (kind == BackboneKind::cnn6 && widths.size() != 6) throw InvalidArgument("backbone: cnn6 needs 6 widths");
  if (kind == BackboneKind::cnn3 && widths.size() != 3) throw InvalidArgument("backbone: cnn3 needs 3 widths");
  if (kind != BackboneKind::mlp) {
    std::size_t h = in_height, w = in_width;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      h = halve(h);
      w = halve(w);
      if (h == 0 || w == 0) {
        throw InvalidArgument("backbone: input " + std::to_string(in_height) + "x" + std::to_string(in_width) +
                              " too small for " + to_string(kind));
      }
    }
  }
}

std::size_t BackboneSpec::feature_dim() const {
  if (kind != BackboneKind::cnn6) return widths.back();
  std::size_t h = in_height, w = in_width;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    h = halve(h);
    w = halve(w);
  }
  return widths.back() * h * w;
}

std::size_t BackboneSpec::block_feature_dim(int block) const {
  if (block < 0) return feature_dim();
  if (static_cast<std::size_t>(block) >= widths.size()) throw InvalidArgument("backbone: block index out of range");
  return widths[static_cast<std::size_t>(block)];
}

std::string to_json(const BackboneSpec& spec) {
  json j{{"kind", to_string(spec.kind)},
         {"in_channels", spec.in_channels},
         {"in_height", spec.in_height},
         {"in_width", spec.in_width},
         {"widths", spec.widths}};
  return j.dump();
}

BackboneSpec backbone_spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    BackboneSpec spec;
    spec.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
    spec.in_channels = j.at("in_channels").get<std::size_t>();
    spec.in_height = j.at("in_height").get<std::size_t>();
    spec.in_width = j.at("in_width").get<std::size_t>();
    spec.widths = j.at("widths").get<std::vector<std::size_t>>();
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("backbone spec json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sequential

Sequential::Sequential(std::vector<nn::LayerPtr> layers, std::vector<std::size_t> block_ends, Shape input_shape)
    : layers_(std::move(layers)), block_ends_(std::move(block_ends)), input_shape_(std::move(input_shape)) {}

void Sequential::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params_ = nn::ParameterSet{};
  for (const auto& layer : layers_) layer->init(params_, rng);
}

void Sequential::check_input(const Tensor& x) const {
  Shape per_sample(x.shape().begin() + (x.rank() ? 1 : 0), x.shape().end());
  if (x.rank() == 0 || per_sample != input_shape_) {
    throw InvalidArgument("network: expected batch of " + shape_string(input_shape_) + ", got " +
                          shape_string(x.shape()));
  }
}

Tensor Sequential::forward(const Tensor& x, Trace* trace) const {
  check_input(x);
  if (trace) {
    trace->activations.clear();
    trace->activations.reserve(layers_.size() + 1);
    trace->activations.push_back(x);
  }
  Tensor cur = x;
  for (const auto& layer : layers_) {
    cur = layer->forward(params_, cur);
    if (trace) trace->activations.push_back(cur);
  }
  return cur;
}

Tensor Sequential::block_feature(const Trace& trace, int block) const {
  if (trace.activations.size() != layers_.size() + 1) throw InvalidArgument("network: trace does not match network");
  if (block < 0) return trace.activations.back();
  if (static_cast<std::size_t>(block) >= block_ends_.size()) throw InvalidArgument("network: block out of range");
  return nn::pool_features(trace.activations[block_ends_[static_cast<std::size_t>(block)] + 1]);
}

Tensor Sequential::backward(const Trace& trace, const Tensor& d_output, const std::vector<BlockGradient>& extra,
                            bool need_input_grad) {
  if (trace.activations.size() != layers_.size() + 1) throw InvalidArgument("network: trace does not match network");
  require_same_shape(trace.activations.back(), d_output, "network backward");
  Tensor grad = d_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    for (const auto& e : extra) {
      if (e.block < 0 || static_cast<std::size_t>(e.block) >= block_ends_.size()) {
        throw InvalidArgument("network: block gradient out of range");
      }
      if (block_ends_[static_cast<std::size_t>(e.block)] == i) {
        grad += nn::unpool_gradient(e.pooled, trace.activations[i + 1].shape());
      }
    }
    grad = layers_[i]->backward(params_, trace.activations[i], trace.activations[i + 1], grad,
                                i > 0 || need_input_grad);
  }
  return need_input_grad ? grad : Tensor{};
}

std::size_t Sequential::macs_per_sample() const {
  std::size_t total = 0;
  Shape s = input_shape_;
  for (const auto& layer : layers_) {
    total += layer->macs(s);
    s = layer->output_shape(s);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Backbone

Sequential Backbone::build(const BackboneSpec& spec) {
  spec.validate();
  std::vector<nn::LayerPtr> layers;
  std::vector<std::size_t> ends;
  if (spec.kind == BackboneKind::mlp) {
    layers.push_back(std::make_shared<nn::Flatten>());
    std::size_t in = spec.in_channels * spec.in_height * spec.in_width;
    for (std::size_t b = 0; b < spec.widths.size(); ++b) {
      layers.push_back(std::make_shared<nn::Linear>("block" + std::to_string(b) + ".fc", in, spec.widths[b]));
      layers.push_back(std::make_shared<nn::Relu>());
      ends.push_back(layers.size() - 1);
      in = spec.widths[b];
    }
  } else {
    std::size_t in = spec.in_channels;
    for (std::size_t b = 0; b < spec.widths.size(); ++b) {
      layers.push_back(std::make_shared<nn::Conv2d>("block" + std::to_string(b) + ".conv", in, spec.widths[b], kKernel,
                                                    kStride, kPad));
      layers.push_back(std::make_shared<nn::Relu>());
      ends.push_back(layers.size() - 1);
      in = spec.widths[b];
    }
    if (spec.kind == BackboneKind::cnn3) layers.push_back(std::make_shared<nn::GlobalAvgPool>());
    else layers.push_back(std::make_shared<nn::Flatten>());
  }
  return Sequential(std::move(layers), std::move(ends), spec.input_shape());
}

Backbone::Backbone(BackboneSpec spec, std::uint64_t seed) : spec_(std::move(spec)), net_(build(spec_)) {
  net_.init(seed);
}

Backbone::Backbone(BackboneSpec spec, nn::ParameterSet params) : spec_(std::move(spec)), net_(build(spec_)) {
  Sequential reference = build(spec_);
  reference.init(0);
  const auto& want = reference.params().items();
  const auto& got = params.items();
  if (want.size() != got.size()) throw InvalidArgument("backbone: parameter set does not match spec");
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != got[i].name || want[i].value.shape() != got[i].value.shape()) {
      throw InvalidArgument("backbone: parameter '" + got[i].name + "' does not match spec");
    }
  }
  net_.params() = std::move(params);
}

Backbone::Backbone(const Backbone& other)
    : spec_(other.spec_), net_(other.net_), forward_calls_(other.forward_calls_.load()) {}

Backbone& Backbone::operator=(const Backbone& other) {
  if (this != &other) {
    spec_ = other.spec_;
    net_ = other.net_;
    forward_calls_ = other.forward_calls_.load();
  }
  return *this;
}

Tensor Backbone::forward(const Tensor& batch, Trace* trace) const {
  ++forward_calls_;
  return net_.forward(batch, trace);
}

// ---------------------------------------------------------------------------
// Mlp

Sequential Mlp::build(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim) {
  if (in_dim == 0 || out_dim == 0) throw InvalidArgument("mlp: zero dimension");
  std::vector<nn::LayerPtr> layers;
  std::vector<std::size_t> ends;
  std::size_t in = in_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.push_back(std::make_shared<nn::Linear>("fc" + std::to_string(i), in, hidden[i]));
    layers.push_back(std::make_shared<nn::Relu>());
    ends.push_back(layers.size() - 1);
    in = hidden[i];
  }
  layers.push_back(std::make_shared<nn::Linear>("out", in, out_dim));
  return Sequential(std::move(layers), std::move(ends), {in_dim});
}

Mlp::Mlp(std::size_t in_dim, std::vector<std::size_t> hidden, std::size_t out_dim, std::uint64_t seed)
    : in_dim_(in_dim), out_dim_(out_dim), hidden_(std::move(hidden)), net_(build(in_dim_, hidden_, out_dim_)) {
  net_.init(seed);
}

Mlp::Mlp(std::size_t in_dim, std::vector<std::size_t> hidden, std::size_t out_dim, nn::ParameterSet params)
    : Mlp(in_dim, std::move(hidden), out_dim, std::uint64_t{0}) {
  const auto& want = net_.params().items();
  const auto& got = params.items();
  if (want.size() != got.size()) throw InvalidArgument("mlp: parameter set does not match shape");
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != got[i].name || want[i].value.shape() != got[i].value.shape()) {
      throw InvalidArgument("mlp: parameter '" + got[i].name + "' does not match shape");
    }
  }
  net_.params() = std::move(params);
}

Tensor Mlp::forward(const Tensor& x, Trace* trace) const { return net_.forward(x, trace); }

CriticAligner CriticAligner::make(std::size_t teacher_dim, std::size_t ckn_dim, std::vector<std::size_t> hidden,
                                  int layer_index, std::uint64_t seed) {
  return CriticAligner{Mlp(teacher_dim, std::move(hidden), ckn_dim, seed), layer_index};
}

// ---------------------------------------------------------------------------
// Composite networks

Tensor FactorNetwork::predict(const Tensor& batch) const {
  return forward_head(*head, forward_ckn(*ckn, batch), forward_tsn(*tsn, batch));
}

std::size_t FactorNetwork::branch_parameter_count() const { return tsn->parameter_count() + head->parameter_count(); }

MultiHeadNet::MultiHeadNet(BackboneSpec spec, std::vector<std::size_t> task_classes, std::uint64_t seed)
    : backbone_(std::move(spec), seed) {
  if (task_classes.empty()) throw InvalidArgument("multi-head net: no tasks");
  const std::size_t d = backbone_.spec().feature_dim();
  for (std::size_t j = 0; j < task_classes.size(); ++j) {
    heads_.emplace_back(d, std::vector<std::size_t>{}, task_classes[j], seed + 1000003ULL * (j + 1));
  }
}

MultiHeadNet::MultiHeadNet(Backbone backbone, std::vector<TaskHead> heads)
    : backbone_(std::move(backbone)), heads_(std::move(heads)) {
  for (const auto& h : heads_) {
    if (h.in_dim() != backbone_.spec().feature_dim()) throw InvalidArgument("multi-head net: head width mismatch");
  }
}

std::vector<Tensor> MultiHeadNet::forward(const Tensor& batch) const {
  const Tensor features = backbone_.forward(batch);
  std::vector<Tensor> out;
  out.reserve(heads_.size());
  for (const auto& h : heads_) out.push_back(h.forward(features));
  return out;
}

Tensor MultiHeadNet::forward_concat(const Tensor& batch) const {
  const auto per_task = forward(batch);
  std::size_t total = 0;
  for (const auto& t : per_task) total += t.dim(1);
  Tensor out({batch.dim(0), total});
  std::size_t offset = 0;
  for (const auto& t : per_task) {
    out.matrix().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(t.dim(1))) = t.matrix();
    offset += t.dim(1);
  }
  return out;
}

std::pair<std::size_t, std::size_t> MultiHeadNet::task_slice(std::size_t task) const {
  if (task >= heads_.size()) throw InvalidArgument("multi-head net: task out of range");
  std::size_t begin = 0;
  for (std::size_t j = 0; j < task; ++j) begin += heads_[j].out_dim();
  return {begin, begin + heads_[task].out_dim()};
}

std::string MultiHeadNet::digest() const {
  Sha256 h;
  h.update(backbone_.params().digest());
  for (const auto& head : heads_) h.update(head.params().digest());
  return h.hex();
}

std::vector<nn::ParameterSet*> MultiHeadNet::parameter_sets() {
  std::vector<nn::ParameterSet*> out{&backbone_.params()};
  for (auto& h : heads_) out.push_back(&h.params());
  return out;
}

// ---------------------------------------------------------------------------
// Operations

Tensor forward_ckn(const Backbone& ckn, const Tensor& batch) { return ckn.forward(batch); }

Tensor forward_tsn(const Backbone& tsn, const Tensor& batch) { return tsn.forward(batch); }

Tensor forward_head(const TaskHead& head, const Tensor& z, const Tensor& t) {
  require_same_shape(z, t, "fused head");
  return head.forward(z + t);
}

Tensor forward_aux_head(const TaskHead& aux_head, const Tensor& t) { return aux_head.forward(t); }

Tensor critic_score(const CriticAligner& aligner, const Tensor& teacher_features, const Tensor& ckn_features) {
  if (teacher_features.rank() != 2 || ckn_features.rank() != 2 || teacher_features.dim(0) != ckn_features.dim(0)) {
    throw InvalidArgument("critic: expected paired (n x d_T) and (n x d_C) features");
  }
  const Tensor aligned = aligner.ffn.forward(teacher_features);
  if (aligned.dim(1) != ckn_features.dim(1)) {
    throw InternalError("critic: aligned teacher width " + std::to_string(aligned.dim(1)) +
                        " differs from CKN width " + std::to_string(ckn_features.dim(1)));
  }
  const std::size_t n = ckn_features.dim(0);
  Tensor scores({n, n});
  scores.matrix().noalias() = ckn_features.matrix() * aligned.matrix().transpose();
  return scores;
}

CriticGradients critic_score_backward(CriticAligner& aligner, const Tensor& teacher_features,
                                      const Tensor& ckn_features, const Tensor& d_scores) {
  Trace trace;
  const Tensor aligned = aligner.ffn.forward(teacher_features, &trace);
  CriticGradients out;
  out.d_ckn_features = Tensor(ckn_features.shape());
  out.d_ckn_features.matrix().noalias() = d_scores.matrix() * aligned.matrix();
  Tensor d_aligned(aligned.shape());
  d_aligned.matrix().noalias() = d_scores.matrix().transpose() * ckn_features.matrix();
  aligner.ffn.backward(trace, d_aligned, false);
  return out;
}

Backbone init_params(const BackboneSpec& spec, std::uint64_t seed) { return Backbone(spec, seed); }

}  // namespace kf::models
