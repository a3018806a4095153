#include "tfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tfnet/error.hpp"

namespace tfnet {

std::size_t shape_volume(const Shape& shape) {
  std::size_t v = 1;
  for (auto d : shape) v *= d;
  return v;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_volume(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for tensor " +
                     shape_string(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for " + shape_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

void Tensor::reshape(Shape shape) {
  if (shape_volume(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::item(std::size_t n) const {
  if (shape_.empty() || n >= shape_[0]) throw ShapeError("batch index out of range");
  Shape inner(shape_.begin() + 1, shape_.end());
  const std::size_t len = shape_volume(inner);
  return Tensor(std::move(inner),
                std::vector<double>(data_.begin() + n * len, data_.begin() + (n + 1) * len));
}

void Tensor::set_item(std::size_t n, const Tensor& value) {
  if (shape_.empty() || n >= shape_[0] ||
      !std::equal(shape_.begin() + 1, shape_.end(), value.shape().begin(), value.shape().end())) {
    throw ShapeError("cannot place " + shape_string(value.shape()) + " into batch " +
                     shape_string(shape_));
  }
  std::copy(value.data_.begin(), value.data_.end(), data_.begin() + n * value.size());
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = items[0].shape();
  shape.insert(shape.begin(), items.size());
  Tensor out(shape);
  for (std::size_t n = 0; n < items.size(); ++n) out.set_item(n, items[n]);
  return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

void add_inplace(Tensor& target, const Tensor& other) {
  require_same_shape(target, other, "add");
  auto t = target.data();
  auto o = other.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += o[i];
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0;
  return out;
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("transpose expects a matrix, got " + shape_string(m.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m[i * c + j];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul dimension mismatch: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  // Row-parallel; every output element accumulates p = 0..k-1 in order, so the
  // result does not depend on the thread count.
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double* row = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("softmax_rows expects a matrix, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = a.raw() + i * c;
    double* o = out.raw() + i * c;
    const double mx = *std::max_element(in, in + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  return out;
}

Tensor flatten_spatial(const Tensor& f) {
  if (f.rank() != 3) throw ShapeError("flatten_spatial expects C x H x W, got " + shape_string(f.shape()));
  return f.reshaped({f.dim(0), f.dim(1) * f.dim(2)});
}

Tensor unflatten_spatial(const Tensor& f, std::size_t height, std::size_t width) {
  if (f.rank() != 2 || f.dim(1) != height * width) {
    throw ShapeError("unflatten_spatial: " + shape_string(f.shape()) + " is not C x " +
                     std::to_string(height * width));
  }
  return f.reshaped({f.dim(0), height, width});
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1 ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_channels: trailing dims differ between " + shape_string(a.shape()) +
                     " and " + shape_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin > end || end > a.dim(0)) {
    throw ShapeError("slice_channels [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[0] = end - begin;
  const std::size_t len = shape_volume(Shape(a.shape().begin() + 1, a.shape().end()));
  return Tensor(std::move(shape), std::vector<double>(a.values().begin() + begin * len,
                                                      a.values().begin() + end * len));
}

}  // namespace tfnet
