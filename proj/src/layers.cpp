#include "tfnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tfnet/error.hpp"

namespace tfnet::nn {

namespace {

// C x H x W  <->  C x 1 x H x W
Tensor as_volume(const Tensor& t) {
  if (t.rank() == 3) return t.reshaped({t.dim(0), 1, t.dim(1), t.dim(2)});
  if (t.rank() == 4) return t;
  throw ShapeError("expected a C x H x W or C x D x H x W tensor, got " + shape_string(t.shape()));
}

Tensor drop_depth(Tensor t) {
  t.reshape({t.dim(0), t.dim(2), t.dim(3)});
  return t;
}

Tensor conv_weights_volume(const Tensor& w) {
  if (w.rank() == 4) return w.reshaped({w.dim(0), w.dim(1), 1, w.dim(2), w.dim(3)});
  if (w.rank() == 5) return w;
  throw ShapeError("convolution weights must have rank 4 or 5, got " + shape_string(w.shape()));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void require_grad_shape(const Tensor& grad, const Shape& expected, const std::string& who) {
  if (grad.shape() != expected) {
    throw ShapeError(who + " backward: gradient " + shape_string(grad.shape()) +
                     " does not match recorded output " + shape_string(expected));
  }
}

}  // namespace

// ---- Functional forms -------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  if (input.rank() != 3 || weights.rank() != 4) {
    throw ShapeError("conv2d expects C x H x W input and 4-d weights");
  }
  ConvGeometry g{{1, weights.dim(2), weights.dim(3)}, {1, stride, stride}, {0, pad, pad}, 1};
  return drop_depth(kernels::conv_forward(as_volume(input), conv_weights_volume(weights), bias, g));
}

Tensor conv3d(const Tensor& input, const Tensor& weights, const Tensor& bias, Triple stride,
              Triple pad) {
  if (input.rank() != 4 || weights.rank() != 5) {
    throw ShapeError("conv3d expects C x D x H x W input and 5-d weights");
  }
  ConvGeometry g{{weights.dim(2), weights.dim(3), weights.dim(4)}, stride, pad, 1};
  return kernels::conv_forward(input, weights, bias, g);
}

Tensor grouped_conv(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    std::size_t groups, Triple stride, Triple pad) {
  const bool planar = input.rank() == 3;
  const Tensor w = conv_weights_volume(weights);
  if (planar) {
    stride[0] = 1;
    pad[0] = 0;
  }
  ConvGeometry g{{w.dim(2), w.dim(3), w.dim(4)}, stride, pad, groups};
  Tensor out = kernels::conv_forward(as_volume(input), w, bias, g);
  return planar ? drop_depth(std::move(out)) : out;
}

double activate(double x, ActivationKind kind, double slope) {
  if (x > 0) return x;
  return kind == ActivationKind::Relu ? 0.0 : slope * x;
}

double activation_derivative(double x, ActivationKind kind, double slope) {
  if (x > 0) return 1.0;
  return kind == ActivationKind::Relu ? 0.0 : slope;
}

Tensor activation(const Tensor& input, ActivationKind kind, double slope) {
  Tensor out = input;
  for (auto& v : out.data()) v = activate(v, kind, slope);
  return out;
}

double guided_gradient(double forward_input, double upstream) {
  return (forward_input > 0 && upstream > 0) ? upstream : 0.0;
}

Tensor maxpool(const Tensor& input, std::size_t window, std::size_t stride) {
  const bool planar = input.rank() == 3;
  PoolGeometry g{{planar ? 1 : window, window, window}, {planar ? 1 : stride, stride, stride}, {0, 0, 0}};
  Tensor out = kernels::maxpool_forward(as_volume(input), g).output;
  return planar ? drop_depth(std::move(out)) : out;
}

Tensor temporal_avg_pool(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("temporal_avg_pool expects C x D x H x W");
  const std::size_t C = input.dim(0), D = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor out({C, 1, input.dim(2), input.dim(3)});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < HW; ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += input[(c * D + d) * HW + i];
      out[c * HW + i] = s / static_cast<double>(D);
    }
  return out;
}

Tensor xavier_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  if (fan_in + fan_out == 0) throw DomainError("xavier_init needs a positive fan");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// ---- Layer ----------------------------------------------------------------

void Layer::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

// ---- Conv -------------------------------------------------------------------

Conv::Conv(std::string name, int spatial_dims, std::size_t in_channels, std::size_t out_channels,
           ConvGeometry geometry, bool bias)
    : dims_(spatial_dims), geom_(geometry) {
  if (dims_ != 2 && dims_ != 3) throw ConfigError("conv spatial dims must be 2 or 3");
  if (dims_ == 2) {
    geom_.kernel[0] = 1;
    geom_.stride[0] = 1;
    geom_.pad[0] = 0;
  }
  if (geom_.groups == 0 || in_channels % geom_.groups || out_channels % geom_.groups) {
    throw ShapeError(name + ": channels " + std::to_string(in_channels) + " -> " +
                     std::to_string(out_channels) + " not divisible by groups " +
                     std::to_string(geom_.groups));
  }
  Shape ws{out_channels, in_channels / geom_.groups, geom_.kernel[0], geom_.kernel[1],
           geom_.kernel[2]};
  weight_ = {name + ".weight", Tensor(ws), Tensor(ws)};
  if (bias) bias_ = {name + ".bias", Tensor({out_channels}), Tensor({out_channels})};
}

std::size_t Conv::fan_in() const {
  const auto& s = weight_.value.shape();
  return s[1] * s[2] * s[3] * s[4];
}

std::size_t Conv::fan_out() const {
  const auto& s = weight_.value.shape();
  return s[0] * s[2] * s[3] * s[4];
}

Tensor Conv::item_view(const Tensor& batch, std::size_t n) const {
  return as_volume(batch.item(n));
}

Shape Conv::output_shape(const Shape& input) const {
  if (input.size() != static_cast<std::size_t>(dims_ + 2)) {
    throw ShapeError(weight_.name + ": expected rank-" + std::to_string(dims_ + 2) + " batch, got " +
                     shape_string(input));
  }
  Shape item(input.begin() + 1, input.end());
  if (dims_ == 2) item.insert(item.begin() + 1, 1);
  Shape out = kernels::conv_output_shape(item, weight_.value.shape(), geom_);
  if (dims_ == 2) out.erase(out.begin() + 1);
  out.insert(out.begin(), input[0]);
  return out;
}

Tensor Conv::forward(const Tensor& input, Mode) {
  const Shape os = output_shape(input.shape());
  input_ = input;
  Tensor out(os);
  for (std::size_t n = 0; n < input.dim(0); ++n) {
    Tensor y = kernels::conv_forward(item_view(input, n), weight_.value, bias_.value, geom_);
    out.set_item(n, y.reshaped(Shape(os.begin() + 1, os.end())));
  }
  return out;
}

Tensor Conv::backward(const Tensor& grad_output) {
  const Shape os = output_shape(input_.shape());
  require_grad_shape(grad_output, os, weight_.name);
  Tensor grad_in(input_.shape());
  for (std::size_t n = 0; n < input_.dim(0); ++n) {
    const Tensor x = item_view(input_, n);
    const Tensor g = as_volume(grad_output.item(n));
    kernels::conv_backward_params(g, x, geom_, weight_.grad, bias_.grad);
    Tensor gi = kernels::conv_backward_input(g, weight_.value, x.shape(), geom_);
    grad_in.set_item(n, gi.reshaped(Shape(input_.shape().begin() + 1, input_.shape().end())));
  }
  return grad_in;
}

std::vector<Parameter*> Conv::parameters() {
  if (has_bias()) return {&weight_, &bias_};
  return {&weight_};
}

// ---- MaxPool ---------------------------------------------------------------

MaxPool::MaxPool(int spatial_dims, PoolGeometry geometry) : dims_(spatial_dims), geom_(geometry) {
  if (dims_ != 2 && dims_ != 3) throw ConfigError("pool spatial dims must be 2 or 3");
  if (dims_ == 2) {
    geom_.window[0] = 1;
    geom_.stride[0] = 1;
    geom_.pad[0] = 0;
  }
}

Shape MaxPool::output_shape(const Shape& input) const {
  if (input.size() != static_cast<std::size_t>(dims_ + 2)) {
    throw ShapeError(kind() + ": expected rank-" + std::to_string(dims_ + 2) + " batch, got " +
                     shape_string(input));
  }
  Shape item(input.begin() + 1, input.end());
  if (dims_ == 2) item.insert(item.begin() + 1, 1);
  Shape out = kernels::pool_output_shape(item, geom_);
  if (dims_ == 2) out.erase(out.begin() + 1);
  out.insert(out.begin(), input[0]);
  return out;
}

Tensor MaxPool::forward(const Tensor& input, Mode) {
  output_shape_ = output_shape(input.shape());
  input_shape_ = input.shape();
  Tensor out(output_shape_);
  argmax_.assign(input.dim(0), {});
  for (std::size_t n = 0; n < input.dim(0); ++n) {
    auto r = kernels::maxpool_forward(as_volume(input.item(n)), geom_);
    out.set_item(n, r.output.reshaped(Shape(output_shape_.begin() + 1, output_shape_.end())));
    argmax_[n] = std::move(r.argmax);
  }
  return out;
}

Tensor MaxPool::backward(const Tensor& grad_output) {
  require_grad_shape(grad_output, output_shape_, kind());
  Tensor grad_in(input_shape_);
  const Shape item(input_shape_.begin() + 1, input_shape_.end());
  for (std::size_t n = 0; n < input_shape_[0]; ++n) {
    grad_in.set_item(n, kernels::maxpool_backward(grad_output.item(n), argmax_[n], item));
  }
  return grad_in;
}

// ---- TemporalPool -------------------------------------------------------------

Shape TemporalPool::output_shape(const Shape& input) const {
  if (input.size() != 5) {
    throw ShapeError("temporal pool expects N x C x D x H x W, got " + shape_string(input));
  }
  return {input[0], input[1], input[3], input[4]};
}

Tensor TemporalPool::forward(const Tensor& input, Mode) {
  const Shape os = output_shape(input.shape());
  input_shape_ = input.shape();
  const std::size_t NC = input.dim(0) * input.dim(1), D = input.dim(2), HW = input.dim(3) * input.dim(4);
  Tensor out(os);
  argmax_.assign(pool_ == TemporalPoolKind::Max ? out.size() : 0, 0);
  for (std::size_t c = 0; c < NC; ++c)
    for (std::size_t i = 0; i < HW; ++i) {
      if (pool_ == TemporalPoolKind::Average) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += input[(c * D + d) * HW + i];
        out[c * HW + i] = s / static_cast<double>(D);
      } else {
        std::size_t best = 0;
        for (std::size_t d = 1; d < D; ++d)
          if (input[(c * D + d) * HW + i] > input[(c * D + best) * HW + i]) best = d;
        out[c * HW + i] = input[(c * D + best) * HW + i];
        argmax_[c * HW + i] = best;
      }
    }
  return out;
}

Tensor TemporalPool::backward(const Tensor& grad_output) {
  require_grad_shape(grad_output, output_shape(input_shape_), kind());
  const std::size_t NC = input_shape_[0] * input_shape_[1], D = input_shape_[2],
                    HW = input_shape_[3] * input_shape_[4];
  Tensor grad_in(input_shape_);
  for (std::size_t c = 0; c < NC; ++c)
    for (std::size_t i = 0; i < HW; ++i) {
      const double g = grad_output[c * HW + i];
      if (pool_ == TemporalPoolKind::Average) {
        for (std::size_t d = 0; d < D; ++d) grad_in[(c * D + d) * HW + i] = g / static_cast<double>(D);
      } else {
        grad_in[(c * D + argmax_[c * HW + i]) * HW + i] = g;
      }
    }
  return grad_in;
}

// ---- BatchNorm ------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, std::size_t channels, BatchNormOptions options)
    : opt_(options),
      gamma_{name + ".gamma", Tensor({channels}, 1.0), Tensor({channels})},
      beta_{name + ".beta", Tensor({channels}), Tensor({channels})},
      running_mean_{name + ".running_mean", Tensor({channels}), Tensor()},
      running_var_{name + ".running_var", Tensor({channels}, 1.0), Tensor()} {}

Tensor BatchNorm::forward(const Tensor& input, Mode mode) {
  const std::size_t C = gamma_.value.size();
  if (input.rank() < 2 || input.dim(1) != C) {
    throw ShapeError(gamma_.name + ": expected N x " + std::to_string(C) + " x ..., got " +
                     shape_string(input.shape()));
  }
  mode_ = mode;
  const std::size_t N = input.dim(0), inner = input.size() / (N * C);
  const double count = static_cast<double>(N * inner);
  Tensor out(input.shape());
  xhat_ = Tensor(input.shape());
  inv_std_.assign(C, 0.0);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
    const std::size_t c = ci;
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < inner; ++i) s += input[(n * C + c) * inner + i];
      mean = s / count;
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = input[(n * C + c) * inner + i] - mean;
          v += d * d;
        }
      var = v / count;
      running_mean_.value[c] = (1 - opt_.momentum) * running_mean_.value[c] + opt_.momentum * mean;
      running_var_.value[c] = (1 - opt_.momentum) * running_var_.value[c] + opt_.momentum * var;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double inv = 1.0 / std::sqrt(var + opt_.epsilon);
    inv_std_[c] = inv;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (n * C + c) * inner + i;
        xhat_[k] = (input[k] - mean) * inv;
        out[k] = xhat_[k] * gamma_.value[c] + beta_.value[c];
      }
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_output) {
  require_grad_shape(grad_output, xhat_.shape(), gamma_.name);
  const std::size_t C = gamma_.value.size(), N = xhat_.dim(0), inner = xhat_.size() / (N * C);
  const double count = static_cast<double>(N * inner);
  Tensor grad_in(xhat_.shape());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
    const std::size_t c = ci;
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (n * C + c) * inner + i;
        sum_g += grad_output[k];
        sum_gx += grad_output[k] * xhat_[k];
      }
    gamma_.grad[c] += sum_gx;
    beta_.grad[c] += sum_g;
    const double scale = gamma_.value[c] * inv_std_[c];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (n * C + c) * inner + i;
        if (mode_ == Mode::Train) {
          grad_in[k] = scale * (grad_output[k] - sum_g / count - xhat_[k] * sum_gx / count);
        } else {
          grad_in[k] = scale * grad_output[k];
        }
      }
  }
  return grad_in;
}

// ---- Activation -------------------------------------------------------------

Tensor Activation::forward(const Tensor& input, Mode) {
  input_ = input;
  return activation(input, act_, slope_);
}

Tensor Activation::backward(const Tensor& grad_output) {
  require_grad_shape(grad_output, input_.shape(), kind());
  grad_input_ = Tensor(input_.shape());
  for (std::size_t i = 0; i < input_.size(); ++i) {
    grad_input_[i] = guided_ ? guided_gradient(input_[i], grad_output[i])
                             : grad_output[i] * activation_derivative(input_[i], act_, slope_);
  }
  return grad_input_;
}

// ---- Linear --------------------------------------------------------------------

Linear::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : weight_{name + ".weight", Tensor({out_features, in_features}), Tensor({out_features, in_features})},
      bias_{name + ".bias", Tensor({out_features}), Tensor({out_features})} {}

Shape Linear::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != weight_.value.dim(1)) {
    throw ShapeError(weight_.name + ": expected N x " + std::to_string(weight_.value.dim(1)) +
                     ", got " + shape_string(input));
  }
  return {input[0], weight_.value.dim(0)};
}

Tensor Linear::forward(const Tensor& input, Mode) {
  output_shape(input.shape());
  input_ = input;
  Tensor out = matmul(input, transpose(weight_.value));
  const std::size_t M = weight_.value.dim(0);
  for (std::size_t n = 0; n < input.dim(0); ++n)
    for (std::size_t j = 0; j < M; ++j) out[n * M + j] += bias_.value[j];
  return out;
}

Tensor Linear::backward(const Tensor& grad_output) {
  require_grad_shape(grad_output, output_shape(input_.shape()), weight_.name);
  add_inplace(weight_.grad, matmul(transpose(grad_output), input_));
  const std::size_t M = weight_.value.dim(0);
  for (std::size_t n = 0; n < grad_output.dim(0); ++n)
    for (std::size_t j = 0; j < M; ++j) bias_.grad[j] += grad_output[n * M + j];
  return matmul(grad_output, weight_.value);
}

// ---- Sequential ------------------------------------------------------------

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Sequential::forward(const Tensor& input, Mode mode) {
  Tensor x = input;
  for (auto& l : layers_) x = l->forward(x, mode);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Parameter*> Sequential::buffers() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    auto p = l->buffers();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void Sequential::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  for (auto& l : layers_) l->visit(fn);
}

// ---- Residual ----------------------------------------------------------------

Residual::Residual(std::unique_ptr<Sequential> branch, std::unique_ptr<Sequential> shortcut,
                   LayerPtr post_activation)
    : branch_(std::move(branch)),
      shortcut_(shortcut ? std::move(shortcut) : std::make_unique<Sequential>()),
      post_(std::move(post_activation)) {}

Shape Residual::output_shape(const Shape& input) const {
  const Shape b = branch_->output_shape(input);
  const Shape s = shortcut_->output_shape(input);
  if (b != s) {
    throw ShapeError("residual branch " + shape_string(b) + " and shortcut " + shape_string(s) +
                     " disagree");
  }
  return b;
}

Tensor Residual::forward(const Tensor& input, Mode mode) {
  Tensor y = branch_->forward(input, mode);
  add_inplace(y, shortcut_->forward(input, mode));
  return post_ ? post_->forward(y, mode) : y;
}

Tensor Residual::backward(const Tensor& grad_output) {
  const Tensor g = post_ ? post_->backward(grad_output) : grad_output;
  Tensor gx = branch_->backward(g);
  add_inplace(gx, shortcut_->backward(g));
  return gx;
}

std::vector<Parameter*> Residual::parameters() {
  auto out = branch_->parameters();
  auto s = shortcut_->parameters();
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::vector<Parameter*> Residual::buffers() {
  auto out = branch_->buffers();
  auto s = shortcut_->buffers();
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

void Residual::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  branch_->visit(fn);
  shortcut_->visit(fn);
  if (post_) post_->visit(fn);
}

// ---- helpers ---------------------------------------------------------------------

GradientBundle backward(Layer& layer, const Tensor& input, const Tensor& output_gradient) {
  layer.zero_grad();
  const Tensor out = layer.forward(input, Mode::Train);
  if (out.shape() != output_gradient.shape()) {
    throw ShapeError(layer.kind() + " backward: gradient " + shape_string(output_gradient.shape()) +
                     " does not match forward output " + shape_string(out.shape()));
  }
  GradientBundle b;
  b.input_gradient = layer.backward(output_gradient);
  for (Parameter* p : layer.parameters()) b.parameter_gradients.push_back(p->grad);
  return b;
}

void initialize(Layer& layer, std::uint64_t seed) {
  std::uint64_t counter = 0;
  layer.visit([&](Layer& l) {
    if (auto* conv = dynamic_cast<Conv*>(&l)) {
      conv->weight().value = xavier_init(conv->weight().value.shape(), conv->fan_in(),
                                         conv->fan_out(), splitmix64(seed + counter++));
      if (conv->has_bias()) conv->bias().value.fill(0.0);
    } else if (auto* lin = dynamic_cast<Linear*>(&l)) {
      const auto& s = lin->weight().value.shape();
      lin->weight().value = xavier_init(s, s[1], s[0], splitmix64(seed + counter++));
      lin->bias().value.fill(0.0);
    }
  });
}

}  // namespace tfnet::nn
