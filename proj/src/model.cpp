#include "tfnet/model.hpp"

#include "tfnet/dct.hpp"
#include "tfnet/error.hpp"

namespace tfnet {

ModelSpec model_spec(const RunConfig& cfg, std::size_t num_classes) {
  ModelSpec s;
  s.scale = cfg.model.scale == "full" ? Scale::Full : Scale::Micro;
  s.num_classes = cfg.model.num_classes ? cfg.model.num_classes : num_classes;
  if (s.num_classes == 0) throw ConfigError("model needs at least one class");
  s.per_component_channels = cfg.model.per_component_channels();
  s.time_only = cfg.model.time_only;
  s.depth = cfg.input.depth;
  s.pool = cfg.model.temporal_pool == "max" ? nn::TemporalPoolKind::Max : nn::TemporalPoolKind::Average;
  s.anchors = cfg.model.anchors.size();
  return s;
}

TFNetModel::TFNetModel(const ModelSpec& spec) : spec_(spec) {
  auto tcfg = spec.scale == Scale::Full ? TimeBackboneConfig::full(spec.depth) : TimeBackboneConfig::micro(spec.depth);
  tcfg.pool = spec.pool;
  time_ = build_time_backbone(tcfg, "time");
  FusionConfig fc;
  fc.time_channels = tcfg.out_channels;
  fc.frequency_channels = 0;
  if (!spec.time_only) {
    const std::size_t cf = 3 * spec.per_component_channels;
    const auto fcfg = spec.scale == Scale::Full ? FrequencyBackboneConfig::full(cf) : FrequencyBackboneConfig::micro(cf);
    freq_ = build_frequency_backbone(fcfg, "freq");
    fc.frequency_channels = fcfg.out_channels;
  }
  fc.num_classes = spec.num_classes;
  fc.anchors = spec.anchors;
  fusion_ = std::make_unique<Fusion>(fc);
}

Shape TFNetModel::output_shape(const Shape& frequency, const Shape& clip) const {
  const Shape t = time_->output_shape(clip);
  const Shape f = freq_ ? freq_->output_shape(frequency) : Shape{};
  return fusion_->output_shape(f, t);
}

Tensor TFNetModel::forward(const Tensor& frequency, const Tensor& clip, nn::Mode mode) {
  const Tensor t = time_->forward(clip, mode);
  const Tensor f = freq_ ? freq_->forward(frequency, mode) : Tensor();
  return fusion_->forward(f, t, mode);
}

std::pair<Tensor, Tensor> TFNetModel::backward(const Tensor& grad_output) {
  auto [gf, gt] = fusion_->backward(grad_output);
  Tensor gclip = time_->backward(gt);
  Tensor gfreq = freq_ ? freq_->backward(gf) : Tensor();
  return {std::move(gfreq), std::move(gclip)};
}

std::vector<nn::Parameter*> TFNetModel::parameters() {
  std::vector<nn::Parameter*> out;
  if (freq_) out = freq_->parameters();
  for (auto* p : time_->parameters()) out.push_back(p);
  for (auto* p : fusion_->parameters()) out.push_back(p);
  return out;
}

std::vector<nn::Parameter*> TFNetModel::buffers() {
  std::vector<nn::Parameter*> out;
  if (freq_) out = freq_->buffers();
  for (auto* p : time_->buffers()) out.push_back(p);
  for (auto* p : fusion_->buffers()) out.push_back(p);
  return out;
}

void TFNetModel::visit(const std::function<void(nn::Layer&)>& fn) {
  if (freq_) freq_->visit(fn);
  time_->visit(fn);
  fusion_->visit(fn);
}

void TFNetModel::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(0.0);
}

void TFNetModel::initialize(std::uint64_t seed) {
  constexpr std::uint64_t kStream = 1ull << 32;
  if (freq_) nn::initialize(*freq_, seed);
  nn::initialize(*time_, seed + kStream);
  nn::initialize(fusion_->convs(), seed + 2 * kStream);
}

ModelInput prepare_inputs(std::span<const ClipSample> clips, const ModelSpec& spec) {
  if (clips.empty()) throw ShapeError("empty batch");
  std::vector<Tensor> freq, seq;
  for (const auto& clip : clips) {
    if (clip.frames.size() != spec.depth) {
      throw ShapeError("clip has " + std::to_string(clip.frames.size()) + " frames, model expects " +
                       std::to_string(spec.depth));
    }
    const std::size_t H = clip.frames.front().height, W = clip.frames.front().width;
    Tensor t({3, spec.depth, H, W});
    for (std::size_t d = 0; d < spec.depth; ++d) {
      const Tensor img = image_to_tensor(clip.frames[d]);
      for (std::size_t c = 0; c < 3; ++c)
        std::copy_n(img.values().begin() + c * H * W, H * W, t.data().begin() + (c * spec.depth + d) * H * W);
    }
    seq.push_back(std::move(t));
    if (!spec.time_only) {
      freq.push_back(scale(dct_frontend_channels(clip.keyframe, spec.per_component_channels).data, 1.0 / 255.0));
    }
  }
  ModelInput in;
  in.clip = stack(seq);
  if (!spec.time_only) in.frequency = stack(freq);
  return in;
}

}  // namespace tfnet
