#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tfnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. The last dimension varies fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  // Same data viewed with a different shape of equal volume.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  void fill(double value);
  bool all_finite() const;

  // Item `n` of a tensor whose leading axis is the batch axis.
  Tensor item(std::size_t n) const;
  void set_item(std::size_t n, const Tensor& value);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

// Stacks equally shaped tensors along a new leading batch axis.
Tensor stack(std::span<const Tensor> items);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
void add_inplace(Tensor& target, const Tensor& other);
double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

Tensor identity(std::size_t n);
Tensor transpose(const Tensor& m);

// A(n x k) * B(k x m). Each output sums over the inner index in ascending order.
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax, stabilized by subtracting each row maximum.
Tensor softmax_rows(const Tensor& a);

// C x H x W -> C x (H*W).
Tensor flatten_spatial(const Tensor& f);
// C x L -> C x H x W with L == H*W.
Tensor unflatten_spatial(const Tensor& f, std::size_t height, std::size_t width);

// Channel-axis concatenation of C1 x ... and C2 x ... with equal trailing dims.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [begin, end) of a channel-first tensor.
Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end);

}  // namespace tfnet
