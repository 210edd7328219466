#include "kfactor/nn.hpp"

#include "kfactor/digest.hpp"
#include "kfactor/error.hpp"

#include <algorithm>
#include <cmath>

namespace kf::nn {

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (find(name)) throw InvalidArgument("parameter '" + name + "' registered twice");
  Tensor grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw NotFound("parameter '" + std::string(name) + "' not found");
}

const Parameter& ParameterSet::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw NotFound("parameter '" + std::string(name) + "' not found");
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::string ParameterSet::digest() const {
  Sha256 h;
  for (const auto& p : params_) {
    h.update(p.name);
    h.update(shape_string(p.value.shape()));
    h.update(p.value.values());
  }
  return h.hex();
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || params_[i].value != other.params_[i].value) return false;
  }
  return true;
}

namespace {

void fan_in_uniform(Tensor& w, std::size_t fan_in, std::mt19937_64& rng) {
  // He-uniform: keeps activation variance stable through ReLU stacks.
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.values()) v = dist(rng);
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string prefix, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding)
    : weight_(prefix + ".weight"),
      bias_(prefix + ".bias"),
      in_c_(in_channels),
      out_c_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding) {}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != in_c_) {
    throw InvalidArgument("conv2d: expected input (" + std::to_string(in_c_) + ", H, W), got " +
                          shape_string(input));
  }
  const std::size_t oh = conv_out(input[1], k_, stride_, pad_), ow = conv_out(input[2], k_, stride_, pad_);
  if (oh == 0 || ow == 0) throw InvalidArgument("conv2d: input " + shape_string(input) + " too small");
  return {out_c_, oh, ow};
}

void Conv2d::init(ParameterSet& params, std::mt19937_64& rng) const {
  Tensor w({out_c_, in_c_, k_, k_});
  fan_in_uniform(w, in_c_ * k_ * k_, rng);
  params.add(weight_, std::move(w));
  params.add(bias_, Tensor({out_c_}));
}

std::size_t Conv2d::macs(const Shape& input) const {
  const Shape out = output_shape(input);
  return out[0] * out[1] * out[2] * in_c_ * k_ * k_;
}

namespace {

struct ConvGeometry {
  std::size_t c, h, w, k, stride, pad, oh, ow;
};

void im2col(const double* img, const ConvGeometry& g, RowMatrix& cols) {
  const std::size_t p = g.oh * g.ow;
  cols.resize(static_cast<Eigen::Index>(g.c * g.k * g.k), static_cast<Eigen::Index>(p));
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols.data() + ((c * g.k + ki) * g.k + kj) * p;
        for (std::size_t oh = 0; oh < g.oh; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          double* out = row + oh * g.ow;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.ow, 0.0);
            continue;
          }
          const double* src = img + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.ow; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& cols, const ConvGeometry& g, double* img) {
  const std::size_t p = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols.data() + ((c * g.k + ki) * g.k + kj) * p;
        for (std::size_t oh = 0; oh < g.oh; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = img + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const double* in = row + oh * g.ow;
          for (std::size_t ow = 0; ow < g.ow; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += in[ow];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const ParameterSet& params, const Tensor& x) const {
  if (x.rank() != 4) throw InvalidArgument("conv2d: expected (N, C, H, W) input, got " + shape_string(x.shape()));
  const Shape out_shape = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t n = x.dim(0);
  const ConvGeometry g{in_c_, x.dim(2), x.dim(3), k_, stride_, pad_, out_shape[1], out_shape[2]};
  const auto& w = params.get(weight_).value;
  const auto& b = params.get(bias_).value;
  const ConstMatrixView wm(w.data(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(in_c_ * k_ * k_));
  const Eigen::Map<const Vector> bv(b.data(), static_cast<Eigen::Index>(out_c_));
  Tensor y({n, out_c_, g.oh, g.ow});
  const std::size_t in_stride = in_c_ * g.h * g.w, out_stride = out_c_ * g.oh * g.ow;
  const auto p = static_cast<Eigen::Index>(g.oh * g.ow);
  RowMatrix cols;
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data() + i * in_stride, g, cols);
    MatrixView out(y.data() + i * out_stride, static_cast<Eigen::Index>(out_c_), p);
    out.noalias() = wm * cols;
    out.colwise() += bv;
  }
  return y;
}

Tensor Conv2d::backward(ParameterSet& params, const Tensor& x, const Tensor&, const Tensor& dy, bool need_dx) const {
  const std::size_t n = x.dim(0);
  const ConvGeometry g{in_c_, x.dim(2), x.dim(3), k_, stride_, pad_, dy.dim(2), dy.dim(3)};
  auto& wp = params.get(weight_);
  auto& bp = params.get(bias_);
  const auto rows = static_cast<Eigen::Index>(out_c_), ckk = static_cast<Eigen::Index>(in_c_ * k_ * k_);
  const ConstMatrixView wm(wp.value.data(), rows, ckk);
  MatrixView dw(wp.grad.data(), rows, ckk);
  Eigen::Map<Vector> db(bp.grad.data(), rows);
  Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
  const std::size_t in_stride = in_c_ * g.h * g.w, out_stride = out_c_ * g.oh * g.ow;
  const auto p = static_cast<Eigen::Index>(g.oh * g.ow);
  RowMatrix cols, dcols;
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data() + i * in_stride, g, cols);
    const ConstMatrixView dyi(dy.data() + i * out_stride, rows, p);
    dw.noalias() += dyi * cols.transpose();
    db += dyi.rowwise().sum();
    if (need_dx) {
      dcols.noalias() = wm.transpose() * dyi;
      col2im(dcols, g, dx.data() + i * in_stride);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string prefix, std::size_t in_features, std::size_t out_features)
    : weight_(prefix + ".weight"), bias_(prefix + ".bias"), in_(in_features), out_(out_features) {}

Shape Linear::output_shape(const Shape& input) const {
  if (shape_size(input) != in_) {
    throw InvalidArgument("linear: expected " + std::to_string(in_) + " input features, got " +
                          shape_string(input));
  }
  return {out_};
}

void Linear::init(ParameterSet& params, std::mt19937_64& rng) const {
  Tensor w({out_, in_});
  fan_in_uniform(w, in_, rng);
  params.add(weight_, std::move(w));
  params.add(bias_, Tensor({out_}));
}

std::size_t Linear::macs(const Shape&) const { return in_ * out_; }

Tensor Linear::forward(const ParameterSet& params, const Tensor& x) const {
  if (x.rank() < 1 || x.row_stride() != in_) {
    throw InvalidArgument("linear: expected (N, " + std::to_string(in_) + ") input, got " + shape_string(x.shape()));
  }
  const auto& w = params.get(weight_).value;
  const auto& b = params.get(bias_).value;
  Tensor y({x.rows(), out_});
  y.matrix().noalias() = x.matrix() * w.matrix().transpose();
  y.matrix().rowwise() += Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(out_)).transpose();
  return y;
}

Tensor Linear::backward(ParameterSet& params, const Tensor& x, const Tensor&, const Tensor& dy, bool need_dx) const {
  auto& wp = params.get(weight_);
  auto& bp = params.get(bias_);
  wp.grad.matrix().noalias() += dy.matrix().transpose() * x.matrix();
  Eigen::Map<Vector>(bp.grad.data(), static_cast<Eigen::Index>(out_)) += dy.matrix().colwise().sum().transpose();
  if (!need_dx) return {};
  Tensor dx(x.shape());
  dx.matrix().noalias() = dy.matrix() * wp.value.matrix();
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise and reshaping layers

Tensor Relu::forward(const ParameterSet&, const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor Relu::backward(ParameterSet&, const Tensor&, const Tensor& y, const Tensor& dy, bool need_dx) const {
  if (!need_dx) return {};
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (y[i] <= 0.0) dx[i] = 0.0;
  }
  return dx;
}

Shape GlobalAvgPool::output_shape(const Shape& input) const {
  if (input.size() != 3) throw InvalidArgument("global pool: expected (C, H, W) input");
  return {input[0]};
}

Tensor GlobalAvgPool::forward(const ParameterSet&, const Tensor& x) const { return pool_features(x); }

Tensor GlobalAvgPool::backward(ParameterSet&, const Tensor& x, const Tensor&, const Tensor& dy, bool need_dx) const {
  if (!need_dx) return {};
  return unpool_gradient(dy, x.shape());
}

Shape Flatten::output_shape(const Shape& input) const { return {shape_size(input)}; }

Tensor Flatten::forward(const ParameterSet&, const Tensor& x) const { return x.reshaped({x.rows(), x.row_stride()}); }

Tensor Flatten::backward(ParameterSet&, const Tensor& x, const Tensor&, const Tensor& dy, bool need_dx) const {
  if (!need_dx) return {};
  return dy.reshaped(x.shape());
}

Tensor pool_features(const Tensor& activation) {
  if (activation.rank() == 2) return activation;
  if (activation.rank() != 4) throw InvalidArgument("pool_features: expected rank 2 or 4");
  const std::size_t n = activation.dim(0), c = activation.dim(1), hw = activation.dim(2) * activation.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = activation.data() + (i * c + ch) * hw;
      double s = 0.0;
      for (std::size_t k = 0; k < hw; ++k) s += p[k];
      out.at(i, ch) = s / static_cast<double>(hw);
    }
  }
  return out;
}

Tensor unpool_gradient(const Tensor& pooled_grad, const Shape& activation_shape) {
  if (activation_shape.size() == 2) return pooled_grad;
  const std::size_t n = activation_shape[0], c = activation_shape[1], hw = activation_shape[2] * activation_shape[3];
  Tensor dx(activation_shape);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = pooled_grad.at(i, ch) / static_cast<double>(hw);
      std::fill_n(dx.data() + (i * c + ch) * hw, hw, g);
    }
  }
  return dx;
}

}  // namespace kf::nn
