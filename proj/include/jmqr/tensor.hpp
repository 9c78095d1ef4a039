#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jmqr {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Raised when operand extents disagree; the message names the offending axis.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a kernel produces or receives NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  /// Multi-index access with bounds checking.
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  /// Scalar value of a one-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  /// Rows [begin, end) along axis 0.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Row i along axis 0, with that axis removed.
  Tensor row(std::size_t i) const;
  /// Gathers rows along axis 0.
  Tensor gather_rows(std::span<const std::size_t> rows) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

enum class Activation { sigmoid, tanh, linear };

Activation parse_activation(const std::string& name);
std::string to_string(Activation kind);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
void require_finite(const Tensor& t, const char* what);

// Kernels. All are pure and reject non-finite results.

/// Zero-padded stride-1 2-D cross-correlation.
/// input: H x W x Cin or B x H x W x Cin; kernels: Kh x Kw x Cin x Cout (odd Kh, Kw);
/// bias: Cout values or empty for none.
Tensor conv2d_same(const Tensor& input, const Tensor& kernels, const Tensor& bias = {});
/// Gradient of conv2d_same with respect to its input.
Tensor conv2d_same_grad_input(const Tensor& grad_out, const Tensor& kernels);
/// Gradient of conv2d_same with respect to its kernels.
Tensor conv2d_same_grad_kernels(const Tensor& input, const Tensor& grad_out,
                                std::size_t kh, std::size_t kw);

Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor activation(const Tensor& x, Activation kind);
/// Derivative of the activation expressed through its output value y = act(x).
Tensor activation_grad_from_output(const Tensor& y, Activation kind);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a += factor * b, in place.
void axpy(Tensor& a, double factor, const Tensor& b);

/// [R x K] * [K x C] -> [R x C]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [K x R]^T * [K x C] -> [R x C]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// [R x K] * [C x K]^T -> [R x C]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// Adds a bias vector along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Sums over every axis but the last.
Tensor sum_to_last_axis(const Tensor& x);

double sum(const Tensor& x);

}  // namespace jmqr
