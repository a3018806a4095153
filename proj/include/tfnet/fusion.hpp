#pragma once

#include <utility>

#include "tfnet/layers.hpp"

namespace tfnet {

// Intermediate values of one channel-attention evaluation.
struct AttentionTrace {
  Tensor features;   // F: C x L
  Tensor attention;  // M1 = softmax_rows(F F^T): C x C
  Tensor attended;   // F' = M1 F: C x L
  Tensor output;     // alpha F'' + F1: C x H x W
};

// Channel self-attention on one C x H x W feature map.
AttentionTrace channel_attention_trace(const Tensor& features, double alpha);
Tensor channel_attention(const Tensor& features, double alpha);

struct AttentionGradients {
  Tensor input;
  double alpha = 0.0;
};

// Gradient of channel_attention with respect to its input and alpha.
AttentionGradients channel_attention_backward(const AttentionTrace& trace, const Tensor& input,
                                              double alpha, const Tensor& grad_output);

// Batched channel attention with a learnable alpha (initialized to zero).
class ChannelAttention : public nn::Layer {
 public:
  explicit ChannelAttention(std::string name);

  std::string kind() const override { return "channel-attention"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, nn::Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<nn::Parameter*> parameters() override { return {&alpha_}; }

  nn::Parameter& alpha() { return alpha_; }
  // Attention matrices recorded on the last forward, one per batch item.
  const std::vector<AttentionTrace>& traces() const { return traces_; }

 private:
  nn::Parameter alpha_;
  Tensor input_;
  std::vector<AttentionTrace> traces_;
};

// (4 + 1 + N_cls) * anchors
std::size_t head_channels(std::size_t num_classes, std::size_t anchors = 5);

struct FusionConfig {
  std::size_t frequency_channels = 425;  // C1; 0 disables the frequency input
  std::size_t time_channels = 2048;      // C2
  std::size_t mid_channels = 0;          // 0 means C1 + C2
  std::size_t num_classes = 21;
  std::size_t anchors = 5;
  double leaky_slope = 0.1;
};

// Attention on each branch, channel concatenation, then 3x3 conv + batchnorm +
// leaky ReLU and a 1x1 conv producing the detection grid F5.
class Fusion {
 public:
  explicit Fusion(const FusionConfig& cfg);

  const FusionConfig& config() const { return cfg_; }
  std::size_t output_channels() const { return head_channels(cfg_.num_classes, cfg_.anchors); }
  bool uses_frequency() const { return cfg_.frequency_channels > 0; }

  // frequency may be empty when the frequency input is disabled.
  Shape output_shape(const Shape& frequency, const Shape& time) const;
  Tensor forward(const Tensor& frequency, const Tensor& time, nn::Mode mode);
  // Returns gradients for (frequency, time); parameter gradients accumulate.
  std::pair<Tensor, Tensor> backward(const Tensor& grad_output);

  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Parameter*> buffers();
  void visit(const std::function<void(nn::Layer&)>& fn);
  void zero_grad();

  ChannelAttention& frequency_attention() { return freq_att_; }
  ChannelAttention& time_attention() { return time_att_; }
  nn::Sequential& convs() { return convs_; }

 private:
  FusionConfig cfg_;
  ChannelAttention freq_att_;
  ChannelAttention time_att_;
  nn::Sequential convs_;
};

}  // namespace tfnet
