#include "jmqr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jmqr {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " holds " +
                     std::to_string(element_count(shape_)) + " elements but " +
                     std::to_string(data_.size()) + " values were given");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index of rank " + std::to_string(index.size()) + " into tensor " +
                     to_string(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw std::out_of_range("index " + std::to_string(i) + " out of range on axis " +
                              std::to_string(axis) + " of " + to_string(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor " + to_string(shape_) + " with " +
                     std::to_string(data_.size()) + " elements");
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) {
    throw ShapeError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis 0 of " + to_string(shape_));
  }
  Shape out_shape = shape_;
  out_shape[0] = end - begin;
  const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
  std::vector<double> values(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                             data_.begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(out_shape), std::move(values));
}

Tensor Tensor::row(std::size_t i) const {
  Tensor r = slice_rows(i, i + 1);
  Shape inner(shape_.begin() + 1, shape_.end());
  return r.reshaped(std::move(inner));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
  if (shape_.empty()) throw ShapeError("gather_rows on a scalar");
  const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape out_shape = shape_;
  out_shape[0] = rows.size();
  std::vector<double> values;
  values.reserve(rows.size() * stride);
  for (std::size_t r : rows) {
    if (r >= shape_[0]) {
      throw std::out_of_range("row " + std::to_string(r) + " out of range for " + to_string(shape_));
    }
    values.insert(values.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * stride),
                  data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
  }
  return Tensor(std::move(out_shape), std::move(values));
}

Activation parse_activation(const std::string& name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw std::invalid_argument("unknown activation '" + name + "' (expected sigmoid, tanh, linear)");
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "?";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() == b.shape()) return;
  std::ostringstream msg;
  msg << what << ": shape mismatch " << to_string(a.shape()) << " vs " << to_string(b.shape());
  if (a.rank() != b.rank()) {
    msg << " (rank " << a.rank() << " vs " << b.rank() << ")";
  } else {
    for (std::size_t axis = 0; axis < a.rank(); ++axis) {
      if (a.dim(axis) != b.dim(axis)) {
        msg << " on axis " << axis;
        break;
      }
    }
  }
  throw ShapeError(msg.str());
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string(what) + ": non-finite value in tensor " + to_string(t.shape()));
  }
}

namespace {

struct ConvGeometry {
  std::size_t batch, height, width, in_channels, out_channels, kh, kw;
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels) {
  if (kernels.size() != 4) {
    throw ShapeError("conv2d_same: kernels must be Kh x Kw x Cin x Cout, got " + to_string(kernels));
  }
  if (input.size() != 3 && input.size() != 4) {
    throw ShapeError("conv2d_same: input must be H x W x C or B x H x W x C, got " +
                     to_string(input));
  }
  const std::size_t lead = input.size() == 4 ? 1 : 0;
  ConvGeometry g{lead ? input[0] : 1, input[lead], input[lead + 1], input[lead + 2],
                 kernels[3], kernels[0], kernels[1]};
  if (g.kh % 2 == 0) {
    throw ShapeError("conv2d_same: kernel extent on axis 0 (height) must be odd, got " +
                     std::to_string(g.kh));
  }
  if (g.kw % 2 == 0) {
    throw ShapeError("conv2d_same: kernel extent on axis 1 (width) must be odd, got " +
                     std::to_string(g.kw));
  }
  if (kernels[2] != g.in_channels) {
    throw ShapeError("conv2d_same: channel axis mismatch, input has " +
                     std::to_string(g.in_channels) + " channels but kernels expect " +
                     std::to_string(kernels[2]));
  }
  return g;
}

}  // namespace

Tensor conv2d_same(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  const ConvGeometry g = conv_geometry(input.shape(), kernels.shape());
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw ShapeError("conv2d_same: bias must have " + std::to_string(g.out_channels) +
                     " entries, got " + to_string(bias.shape()));
  }
  Shape out_shape = input.shape();
  out_shape.back() = g.out_channels;
  Tensor out(out_shape);

  const long ph = static_cast<long>(g.kh / 2);
  const long pw = static_cast<long>(g.kw / 2);
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  double* o = out.data().data();
  const std::size_t cin = g.in_channels, cout = g.out_channels;

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        double* op = o + ((b * g.height + y) * g.width + x) * cout;
        if (!bias.empty()) std::copy(bias.data().begin(), bias.data().end(), op);
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
          const long iy = static_cast<long>(y + dy) - ph;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t dx = 0; dx < g.kw; ++dx) {
            const long ix = static_cast<long>(x + dx) - pw;
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            const double* ip = in + ((b * g.height + iy) * g.width + ix) * cin;
            const double* kp = k + (dy * g.kw + dx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double v = ip[ci];
              const double* krow = kp + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) op[co] += v * krow[co];
            }
          }
        }
      }
    }
  }
  require_finite(out, "conv2d_same");
  return out;
}

Tensor conv2d_same_grad_input(const Tensor& grad_out, const Tensor& kernels) {
  if (kernels.rank() != 4) throw ShapeError("conv2d_same_grad_input: kernels must be rank 4");
  Shape in_shape = grad_out.shape();
  if (in_shape.empty()) throw ShapeError("conv2d_same_grad_input: scalar gradient");
  in_shape.back() = kernels.dim(2);
  const ConvGeometry g = conv_geometry(in_shape, kernels.shape());
  if (grad_out.shape().back() != g.out_channels) {
    throw ShapeError("conv2d_same_grad_input: gradient channel axis mismatch");
  }
  Tensor grad_in(in_shape);
  const long ph = static_cast<long>(g.kh / 2);
  const long pw = static_cast<long>(g.kw / 2);
  const double* go = grad_out.data().data();
  const double* k = kernels.data().data();
  double* gi = grad_in.data().data();
  const std::size_t cin = g.in_channels, cout = g.out_channels;

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const double* gp = go + ((b * g.height + y) * g.width + x) * cout;
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
          const long iy = static_cast<long>(y + dy) - ph;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t dx = 0; dx < g.kw; ++dx) {
            const long ix = static_cast<long>(x + dx) - pw;
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            double* ip = gi + ((b * g.height + iy) * g.width + ix) * cin;
            const double* kp = k + (dy * g.kw + dx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* krow = kp + ci * cout;
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) acc += gp[co] * krow[co];
              ip[ci] += acc;
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor conv2d_same_grad_kernels(const Tensor& input, const Tensor& grad_out, std::size_t kh,
                                std::size_t kw) {
  if (input.rank() < 3) throw ShapeError("conv2d_same_grad_kernels: input rank must be 3 or 4");
  const std::size_t cin = input.shape().back();
  const std::size_t cout = grad_out.shape().back();
  const ConvGeometry g = conv_geometry(input.shape(), Shape{kh, kw, cin, cout});
  Tensor grad_k(Shape{kh, kw, cin, cout});
  const long ph = static_cast<long>(kh / 2);
  const long pw = static_cast<long>(kw / 2);
  const double* in = input.data().data();
  const double* go = grad_out.data().data();
  double* gk = grad_k.data().data();

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const double* gp = go + ((b * g.height + y) * g.width + x) * cout;
        for (std::size_t dy = 0; dy < kh; ++dy) {
          const long iy = static_cast<long>(y + dy) - ph;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const long ix = static_cast<long>(x + dx) - pw;
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            const double* ip = in + ((b * g.height + iy) * g.width + ix) * cin;
            double* kp = gk + (dy * kw + dx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double v = ip[ci];
              double* krow = kp + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) krow[co] += v * gp[co];
            }
          }
        }
      }
    }
  }
  return grad_k;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  require_finite(out, "hadamard");
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) {
        // Split by sign so exp never overflows.
        const double v = x[i];
        if (v >= 0) {
          out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
          const double e = std::exp(v);
          out[i] = e / (1.0 + e);
        }
      }
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    case Activation::linear:
      out = x;
      break;
  }
  require_finite(out, "activation");
  return out;
}

Tensor activation_grad_from_output(const Tensor& y, Activation kind) {
  Tensor out(y.shape());
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < y.size(); ++i) out[i] = 1.0 - y[i] * y[i];
      break;
    case Activation::linear:
      std::fill(out.data().begin(), out.data().end(), 1.0);
      break;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  require_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  require_finite(out, "sub");
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.data()) v *= factor;
  require_finite(out, "scale");
  return out;
}

void axpy(Tensor& a, double factor, const Tensor& b) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += factor * b[i];
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " + to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
  if (b.dim(0) != inner) {
    throw ShapeError("matmul: inner axis mismatch " + to_string(a.shape()) + " * " +
                     to_string(b.shape()));
  }
  Tensor out(Shape{rows, cols});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = op + r * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double v = ap[r * inner + k];
      const double* brow = bp + k * cols;
      for (std::size_t c = 0; c < cols; ++c) orow[c] += v * brow[c];
    }
  }
  require_finite(out, "matmul");
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t inner = a.dim(0), rows = a.dim(1), cols = b.dim(1);
  if (b.dim(0) != inner) {
    throw ShapeError("matmul_tn: axis 0 mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor out(Shape{rows, cols});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out.data().data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double* brow = bp + k * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = ap[k * rows + r];
      double* orow = op + r * cols;
      for (std::size_t c = 0; c < cols; ++c) orow[c] += v * brow[c];
    }
  }
  require_finite(out, "matmul_tn");
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(0);
  if (b.dim(1) != inner) {
    throw ShapeError("matmul_nt: axis 1 mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor out(Shape{rows, cols});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += ap[r * inner + k] * bp[c * inner + k];
      op[r * cols + c] = acc;
    }
  }
  require_finite(out, "matmul_nt");
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) +
                     " does not match the last axis of " + to_string(x.shape()));
  }
  Tensor out = x;
  const std::size_t c = bias.dim(0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
  return out;
}

Tensor sum_to_last_axis(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("sum_to_last_axis: scalar input");
  const std::size_t c = x.shape().back();
  Tensor out(Shape{c});
  for (std::size_t i = 0; i < x.size(); ++i) out[i % c] += x[i];
  return out;
}

double sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return total;
}

}  // namespace jmqr
