#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace kf {

using Shape = std::vector<std::size_t>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using Vector = Eigen::VectorXd;

// Eigen's SIMD kernels peel loops by address alignment, so storage with a
// varying heap alignment would change summation order from run to run.
using AlignedValues = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense row-major float64 tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor from_matrix(const RowMatrix& m);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  // 2-D accessors; the tensor is viewed as (dim0 x rest).
  double& at(std::size_t r, std::size_t c) noexcept { return values_[r * row_stride() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return values_[r * row_stride() + c]; }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_stride() const noexcept;

  MatrixView matrix();
  ConstMatrixView matrix() const;

  /// Same storage, new shape; total size must match.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Copies rows [begin, end) of the leading axis.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Copies columns [begin, end) of a 2-D tensor.
  Tensor slice_cols(std::size_t begin, std::size_t end) const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool all_finite() const noexcept;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  AlignedValues values_;
};

Tensor operator+(Tensor a, const Tensor& b);

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Throws InvalidArgument with `what` unless `a` and `b` have equal shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace kf
