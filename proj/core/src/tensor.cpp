#include "kfactor/tensor.hpp"

#include "kfactor/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace kf {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != shape_size(shape_)) {
    throw InvalidArgument("tensor: " + std::to_string(values_.size()) + " values do not fill shape " +
                          shape_string(shape_));
  }
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw InvalidArgument("tensor: axis out of range");
  return shape_[axis];
}

std::size_t Tensor::row_stride() const noexcept {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return values_.size() / shape_[0];
}

MatrixView Tensor::matrix() {
  return MatrixView(values_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(row_stride()));
}

ConstMatrixView Tensor::matrix() const {
  return ConstMatrixView(values_.data(), static_cast<Eigen::Index>(rows()),
                         static_cast<Eigen::Index>(row_stride()));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != values_.size()) {
    throw InvalidArgument("tensor: cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw InvalidArgument("tensor: row slice out of range");
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t stride = row_stride();
  std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                        values_.begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::slice_cols(std::size_t begin, std::size_t end) const {
  if (rank() != 2) throw InvalidArgument("tensor: slice_cols needs a 2-D tensor");
  if (begin > end || end > shape_[1]) throw InvalidArgument("tensor: column slice out of range");
  Tensor out({shape_[0], end - begin});
  out.matrix() = matrix().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return out;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

}  // namespace kf
