#pragma once

#include <memory>
#include <span>
#include <utility>

#include "tfnet/backbones.hpp"
#include "tfnet/config.hpp"
#include "tfnet/data.hpp"
#include "tfnet/fusion.hpp"

namespace tfnet {

struct ModelSpec {
  Scale scale = Scale::Micro;
  std::size_t num_classes = 1;
  std::size_t per_component_channels = 64;
  bool time_only = false;
  std::size_t depth = 16;
  nn::TemporalPoolKind pool = nn::TemporalPoolKind::Average;
  std::size_t anchors = 5;
};

ModelSpec model_spec(const RunConfig& cfg, std::size_t num_classes);

// Frequency backbone on the keyframe DCT volume, time backbone on the frame
// sequence, and the attention fusion producing the detection grid. With
// time_only the frequency branch is absent.
class TFNetModel {
 public:
  explicit TFNetModel(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  bool has_frequency() const { return freq_ != nullptr; }

  // frequency: N x C_f x B x B (ignored when time_only), clip: N x 3 x D x F x F.
  Shape output_shape(const Shape& frequency, const Shape& clip) const;
  Tensor forward(const Tensor& frequency, const Tensor& clip, nn::Mode mode);
  // Gradients for (frequency input, clip input).
  std::pair<Tensor, Tensor> backward(const Tensor& grad_output);

  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Parameter*> buffers();
  void visit(const std::function<void(nn::Layer&)>& fn);
  void zero_grad();
  void initialize(std::uint64_t seed);

  nn::Sequential* frequency_backbone() { return freq_.get(); }
  nn::Sequential& time_backbone() { return *time_; }
  Fusion& fusion() { return *fusion_; }

 private:
  ModelSpec spec_;
  std::unique_ptr<nn::Sequential> freq_;
  std::unique_ptr<nn::Sequential> time_;
  std::unique_ptr<Fusion> fusion_;
};

struct ModelInput {
  Tensor frequency;  // empty for time-only models
  Tensor clip;
};

// Keyframe DCT (scaled by 1/255) and the frame stack scaled to [0, 1].
ModelInput prepare_inputs(std::span<const ClipSample> clips, const ModelSpec& spec);

}  // namespace tfnet
