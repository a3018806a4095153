#include "tfnet/fusion.hpp"

#include "tfnet/error.hpp"

namespace tfnet {

AttentionTrace channel_attention_trace(const Tensor& features, double alpha) {
  if (features.rank() != 3) {
    throw ShapeError("channel attention expects C x H x W, got " + shape_string(features.shape()));
  }
  AttentionTrace t;
  t.features = flatten_spatial(features);
  t.attention = softmax_rows(matmul(t.features, transpose(t.features)));
  t.attended = matmul(t.attention, t.features);
  if (alpha == 0.0) {
    t.output = features;
  } else {
    t.output = add(scale(unflatten_spatial(t.attended, features.dim(1), features.dim(2)), alpha),
                   features);
  }
  return t;
}

Tensor channel_attention(const Tensor& features, double alpha) {
  return channel_attention_trace(features, alpha).output;
}

AttentionGradients channel_attention_backward(const AttentionTrace& trace, const Tensor& input,
                                              double alpha, const Tensor& grad_output) {
  if (grad_output.shape() != input.shape()) {
    throw ShapeError("channel attention backward: gradient " + shape_string(grad_output.shape()) +
                     " does not match input " + shape_string(input.shape()));
  }
  const std::size_t C = trace.features.dim(0), L = trace.features.dim(1);
  const Tensor g = grad_output.reshaped({C, L});
  AttentionGradients out;
  out.alpha = dot(g, trace.attended);

  Tensor grad_f = g;  // residual path
  if (alpha != 0.0) {
    const Tensor grad_attended = scale(g, alpha);
    // F' = M F
    const Tensor grad_m = matmul(grad_attended, transpose(trace.features));
    add_inplace(grad_f, matmul(transpose(trace.attention), grad_attended));
    // softmax rows: dG_ij = M_ij (dM_ij - sum_k dM_ik M_ik)
    Tensor grad_g({C, C});
    for (std::size_t i = 0; i < C; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < C; ++k) s += grad_m[i * C + k] * trace.attention[i * C + k];
      for (std::size_t j = 0; j < C; ++j) {
        grad_g[i * C + j] = trace.attention[i * C + j] * (grad_m[i * C + j] - s);
      }
    }
    // G = F F^T
    add_inplace(grad_f, matmul(add(grad_g, transpose(grad_g)), trace.features));
  }
  out.input = grad_f.reshaped(input.shape());
  return out;
}

ChannelAttention::ChannelAttention(std::string name)
    : alpha_{std::move(name), Tensor({1}), Tensor({1})} {}

Shape ChannelAttention::output_shape(const Shape& input) const {
  if (input.size() != 4) {
    throw ShapeError("channel attention expects N x C x H x W, got " + shape_string(input));
  }
  return input;
}

Tensor ChannelAttention::forward(const Tensor& input, nn::Mode) {
  output_shape(input.shape());
  input_ = input;
  traces_.clear();
  Tensor out(input.shape());
  for (std::size_t n = 0; n < input.dim(0); ++n) {
    traces_.push_back(channel_attention_trace(input.item(n), alpha_.value[0]));
    out.set_item(n, traces_.back().output);
  }
  return out;
}

Tensor ChannelAttention::backward(const Tensor& grad_output) {
  if (grad_output.shape() != input_.shape()) {
    throw ShapeError(alpha_.name + " backward: gradient " + shape_string(grad_output.shape()) +
                     " does not match recorded output " + shape_string(input_.shape()));
  }
  Tensor grad_in(input_.shape());
  for (std::size_t n = 0; n < input_.dim(0); ++n) {
    auto g = channel_attention_backward(traces_[n], input_.item(n), alpha_.value[0],
                                        grad_output.item(n));
    alpha_.grad[0] += g.alpha;
    grad_in.set_item(n, g.input);
  }
  return grad_in;
}

std::size_t head_channels(std::size_t num_classes, std::size_t anchors) {
  return (4 + 1 + num_classes) * anchors;
}

Fusion::Fusion(const FusionConfig& cfg)
    : cfg_(cfg), freq_att_("fusion.alpha_freq"), time_att_("fusion.alpha_time") {
  if (cfg_.time_channels == 0) throw ConfigError("fusion needs time features");
  if (cfg_.num_classes == 0 || cfg_.anchors == 0) throw ConfigError("fusion needs classes and anchors");
  const std::size_t in = cfg_.frequency_channels + cfg_.time_channels;
  const std::size_t mid = cfg_.mid_channels ? cfg_.mid_channels : in;
  convs_.add<nn::Conv>("fusion.conv1", 2, in, mid, nn::ConvGeometry{{1, 3, 3}, {1, 1, 1}, {0, 1, 1}, 1},
                       false);
  convs_.add<nn::BatchNorm>("fusion.bn1", mid);
  convs_.add<nn::Activation>(nn::ActivationKind::LeakyRelu, cfg_.leaky_slope);
  convs_.add<nn::Conv>("fusion.conv2", 2, mid, output_channels(), nn::ConvGeometry{}, true);
}

Shape Fusion::output_shape(const Shape& frequency, const Shape& time) const {
  if (time.size() != 4 || time[1] != cfg_.time_channels) {
    throw ShapeError("fusion: time features " + shape_string(time) + " do not have " +
                     std::to_string(cfg_.time_channels) + " channels");
  }
  Shape merged = time;
  if (uses_frequency()) {
    if (frequency.size() != 4 || frequency[1] != cfg_.frequency_channels) {
      throw ShapeError("fusion: frequency features " + shape_string(frequency) + " do not have " +
                       std::to_string(cfg_.frequency_channels) + " channels");
    }
    if (frequency[0] != time[0] || frequency[2] != time[2] || frequency[3] != time[3]) {
      throw ShapeError("fusion: spatial mismatch between " + shape_string(frequency) + " and " +
                       shape_string(time));
    }
    merged[1] += frequency[1];
  }
  return convs_.output_shape(merged);
}

Tensor Fusion::forward(const Tensor& frequency, const Tensor& time, nn::Mode mode) {
  output_shape(uses_frequency() ? frequency.shape() : Shape{}, time.shape());
  const Tensor t = time_att_.forward(time, mode);
  Tensor merged;
  if (uses_frequency()) {
    const Tensor f = freq_att_.forward(frequency, mode);
    merged = Tensor({t.dim(0), f.dim(1) + t.dim(1), t.dim(2), t.dim(3)});
    for (std::size_t n = 0; n < t.dim(0); ++n) merged.set_item(n, concat_channels(f.item(n), t.item(n)));
  } else {
    merged = t;
  }
  return convs_.forward(merged, mode);
}

std::pair<Tensor, Tensor> Fusion::backward(const Tensor& grad_output) {
  const Tensor g = convs_.backward(grad_output);
  if (!uses_frequency()) return {Tensor(), time_att_.backward(g)};
  const std::size_t N = g.dim(0), C1 = cfg_.frequency_channels, C2 = cfg_.time_channels;
  Tensor gf({N, C1, g.dim(2), g.dim(3)});
  Tensor gt({N, C2, g.dim(2), g.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    const Tensor item = g.item(n);
    gf.set_item(n, slice_channels(item, 0, C1));
    gt.set_item(n, slice_channels(item, C1, C1 + C2));
  }
  return {freq_att_.backward(gf), time_att_.backward(gt)};
}

std::vector<nn::Parameter*> Fusion::parameters() {
  std::vector<nn::Parameter*> out;
  if (uses_frequency()) out.push_back(&freq_att_.alpha());
  out.push_back(&time_att_.alpha());
  auto c = convs_.parameters();
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<nn::Parameter*> Fusion::buffers() { return convs_.buffers(); }

void Fusion::visit(const std::function<void(nn::Layer&)>& fn) {
  if (uses_frequency()) freq_att_.visit(fn);
  time_att_.visit(fn);
  convs_.visit(fn);
}

void Fusion::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(0.0);
}

}  // namespace tfnet
