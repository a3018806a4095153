#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tfnet/kernels.hpp"
#include "tfnet/tensor.hpp"

namespace tfnet::nn {

using kernels::ConvGeometry;
using kernels::PoolGeometry;
using kernels::Triple;

// ---- Functional forms on single (unbatched) items -------------------------

// input C_in x H x W, weights C_out x C_in x k x k.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
              std::size_t pad);
// input C_in x D x H x W, weights C_out x C_in x kd x kh x kw.
Tensor conv3d(const Tensor& input, const Tensor& weights, const Tensor& bias, Triple stride,
              Triple pad);
// 2-D (rank-3 input) or 3-D (rank-4 input) convolution split into `groups`.
Tensor grouped_conv(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    std::size_t groups, Triple stride = {1, 1, 1}, Triple pad = {0, 0, 0});

enum class ActivationKind { Relu, LeakyRelu };

double activate(double x, ActivationKind kind, double slope);
double activation_derivative(double x, ActivationKind kind, double slope);
Tensor activation(const Tensor& input, ActivationKind kind, double slope = 0.1);

// Guided rectifier rule: pass g only where both the forward input and g are positive.
double guided_gradient(double forward_input, double upstream);

// C x H x W with a square window, or C x D x H x W with a cubic window.
Tensor maxpool(const Tensor& input, std::size_t window, std::size_t stride);
// C x D x H x W -> C x 1 x H x W (mean over depth).
Tensor temporal_avg_pool(const Tensor& input);

// Samples Normal(0, 2 / (fan_in + fan_out)); the same seed gives the same tensor.
Tensor xavier_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

// ---- Layers ----------------------------------------------------------------

enum class Mode { Train, Eval };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// A differentiable unit operating on batched tensors (batch axis first).
// forward() records what backward() needs; backward() returns the input
// gradient and accumulates parameter gradients.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& input, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;

  // Trainable tensors.
  virtual std::vector<Parameter*> parameters() { return {}; }
  // Persistent non-trainable state (running statistics).
  virtual std::vector<Parameter*> buffers() { return {}; }
  // Calls fn on this layer and every nested layer.
  virtual void visit(const std::function<void(Layer&)>& fn) { fn(*this); }

  void zero_grad();
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv : public Layer {
 public:
  // spatial_dims is 2 (N x C x H x W) or 3 (N x C x D x H x W).
  Conv(std::string name, int spatial_dims, std::size_t in_channels, std::size_t out_channels,
       ConvGeometry geometry, bool bias = true);

  std::string kind() const override { return dims_ == 2 ? "conv2d" : "conv3d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override;

  const ConvGeometry& geometry() const { return geom_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  bool has_bias() const { return !bias_.value.empty(); }
  std::size_t fan_in() const;
  std::size_t fan_out() const;

 private:
  Tensor item_view(const Tensor& batch, std::size_t n) const;

  int dims_;
  ConvGeometry geom_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

class MaxPool : public Layer {
 public:
  MaxPool(int spatial_dims, PoolGeometry geometry);

  std::string kind() const override { return dims_ == 2 ? "maxpool2d" : "maxpool3d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  int dims_;
  PoolGeometry geom_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<std::vector<std::size_t>> argmax_;
};

enum class TemporalPoolKind { Average, Max };

// N x C x D x H x W -> N x C x H x W, reducing depth by mean (or max).
class TemporalPool : public Layer {
 public:
  explicit TemporalPool(TemporalPoolKind pool = TemporalPoolKind::Average) : pool_(pool) {}

  std::string kind() const override { return "temporal-avg-pool"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  TemporalPoolKind pool_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalization over the batch and all trailing axes.
class BatchNorm : public Layer {
 public:
  BatchNorm(std::string name, std::size_t channels, BatchNormOptions options = {});

  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Parameter*> buffers() override { return {&running_mean_, &running_var_}; }

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Parameter& running_mean() { return running_mean_; }
  Parameter& running_var() { return running_var_; }

 private:
  BatchNormOptions opt_;
  Parameter gamma_, beta_, running_mean_, running_var_;
  Mode mode_ = Mode::Train;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class Activation : public Layer {
 public:
  explicit Activation(ActivationKind act, double slope = 0.1) : act_(act), slope_(slope) {}

  std::string kind() const override { return act_ == ActivationKind::Relu ? "relu" : "leaky-relu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;

  // Guided mode replaces the derivative with guided_gradient().
  void set_guided(bool guided) { guided_ = guided; }
  bool guided() const { return guided_; }
  const Tensor& last_input() const { return input_; }
  const Tensor& last_input_gradient() const { return grad_input_; }

 private:
  ActivationKind act_;
  double slope_;
  bool guided_ = false;
  Tensor input_;
  Tensor grad_input_;
};

// y = W x + b on N x in.
class Linear : public Layer {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_, bias_;
  Tensor input_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(LayerPtr layer) { layers_.push_back(std::move(layer)); }

  std::string kind() const override { return "sequential"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override;
  std::vector<Parameter*> buffers() override;
  void visit(const std::function<void(Layer&)>& fn) override;

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<LayerPtr> layers_;
};

// out = post(branch(x) + shortcut(x)); an empty shortcut is the identity.
class Residual : public Layer {
 public:
  Residual(std::unique_ptr<Sequential> branch, std::unique_ptr<Sequential> shortcut,
           LayerPtr post_activation);

  std::string kind() const override { return "residual"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override;
  std::vector<Parameter*> buffers() override;
  void visit(const std::function<void(Layer&)>& fn) override;

  Sequential& branch() { return *branch_; }
  Sequential& shortcut() { return *shortcut_; }

 private:
  std::unique_ptr<Sequential> branch_;
  std::unique_ptr<Sequential> shortcut_;
  LayerPtr post_;
};

// Inputs and parameters gradients of one layer for one forward/backward pair.
struct GradientBundle {
  Tensor input_gradient;
  std::vector<Tensor> parameter_gradients;  // aligned with layer.parameters()
};

// Runs a training-mode forward on `input`, then backward with `output_gradient`
// from zeroed parameter gradients. Throws ShapeError when output_gradient does
// not match the forward output.
GradientBundle backward(Layer& layer, const Tensor& input, const Tensor& output_gradient);

// Xavier-normal initialization of every conv/linear weight in `layer`;
// biases, and batchnorm shifts start at zero, batchnorm scales at one.
void initialize(Layer& layer, std::uint64_t seed);

}  // namespace tfnet::nn
