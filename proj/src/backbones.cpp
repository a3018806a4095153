#include "tfnet/backbones.hpp"

#include <string>

#include "tfnet/error.hpp"

namespace tfnet {

using nn::ActivationKind;
using nn::ConvGeometry;
using nn::PoolGeometry;
using nn::Triple;

namespace {

constexpr std::size_t kFrequencyPools = 3;
constexpr std::size_t kTimeStages = 4;

std::string join(const std::string& prefix, const std::string& name) { return prefix + "." + name; }

void conv_bn_act(nn::Sequential& seq, const std::string& name, int dims, std::size_t in,
                 std::size_t out, ConvGeometry g, ActivationKind act, double slope) {
  seq.add<nn::Conv>(name + ".conv", dims, in, out, g, false);
  seq.add<nn::BatchNorm>(name + ".bn", out);
  seq.add<nn::Activation>(act, slope);
}

}  // namespace

FrequencyBackboneConfig FrequencyBackboneConfig::full(std::size_t input_channels) {
  FrequencyBackboneConfig c;
  c.input_channels = input_channels;
  return c;
}

FrequencyBackboneConfig FrequencyBackboneConfig::micro(std::size_t input_channels) {
  FrequencyBackboneConfig c;
  c.input_channels = input_channels;
  c.widths = {8, 16, 32};
  c.stage_convs = {1, 3, 5};
  c.out_channels = 16;
  return c;
}

TimeBackboneConfig TimeBackboneConfig::full(std::size_t depth) {
  TimeBackboneConfig c;
  c.depth = depth;
  return c;
}

TimeBackboneConfig TimeBackboneConfig::micro(std::size_t depth) {
  TimeBackboneConfig c;
  c.depth = depth;
  c.stem_width = 8;
  c.stem_kernel_depth = 3;
  c.stem_kernel = 3;
  c.stage_blocks = {1, 1, 1, 1};
  c.stage_widths = {16, 32, 32, 32};
  c.cardinality = 4;
  c.out_channels = 16;
  return c;
}

void validate(const FrequencyBackboneConfig& cfg) {
  if (cfg.input_channels == 0) throw ConfigError("frequency backbone needs at least one input channel");
  if (cfg.widths.size() < kFrequencyPools) {
    throw ConfigError("frequency.widths needs at least " + std::to_string(kFrequencyPools) +
                      " stages to reach the 8x reduction");
  }
  if (cfg.stage_convs.size() != cfg.widths.size()) {
    throw ConfigError("frequency.stage_convs must have one entry per width");
  }
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    if (cfg.widths[i] == 0) throw ConfigError("frequency.widths entries must be positive");
    if (cfg.stage_convs[i] % 2 == 0) throw ConfigError("frequency.stage_convs entries must be odd");
    if (cfg.stage_convs[i] > 1 && cfg.widths[i] < 2) {
      throw ConfigError("frequency stage width must be at least 2 when it contains 1x1 convolutions");
    }
  }
  if (cfg.out_channels == 0) throw ConfigError("frequency.out_channels must be positive");
}

void validate(const TimeBackboneConfig& cfg) {
  if (cfg.depth == 0) throw ConfigError("time backbone needs a clip depth of at least 1");
  if (cfg.input_channels == 0 || cfg.stem_width == 0) throw ConfigError("time stem width must be positive");
  if (cfg.stem_kernel % 2 == 0 || cfg.stem_kernel_depth % 2 == 0) {
    throw ConfigError("time stem kernel sizes must be odd");
  }
  if (cfg.stage_blocks.size() != kTimeStages || cfg.stage_widths.size() != kTimeStages) {
    throw ConfigError("time.stage_blocks and time.stage_widths need exactly 4 stages");
  }
  if (cfg.cardinality == 0) throw ConfigError("time.cardinality must be positive");
  for (std::size_t i = 0; i < kTimeStages; ++i) {
    if (cfg.stage_blocks[i] == 0) throw ConfigError("time.stage_blocks entries must be positive");
    const std::size_t w = cfg.stage_widths[i];
    if (w % 2 != 0 || (w / 2) % cfg.cardinality != 0) {
      throw ConfigError("time stage width " + std::to_string(w) +
                        " must be even with half divisible by cardinality " +
                        std::to_string(cfg.cardinality));
    }
  }
  if (cfg.out_channels == 0) throw ConfigError("time.out_channels must be positive");
}

std::unique_ptr<nn::Sequential> build_frequency_backbone(const FrequencyBackboneConfig& cfg,
                                                         const std::string& prefix) {
  validate(cfg);
  auto net = std::make_unique<nn::Sequential>();
  std::size_t in = cfg.input_channels;
  for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
    const std::size_t w = cfg.widths[s];
    for (std::size_t k = 0; k < cfg.stage_convs[s]; ++k) {
      const bool wide = k % 2 == 0;
      const std::size_t out = wide ? w : w / 2;
      const std::size_t ks = wide ? 3 : 1;
      ConvGeometry g{{1, ks, ks}, {1, 1, 1}, {0, ks / 2, ks / 2}, 1};
      conv_bn_act(*net, join(prefix, "s" + std::to_string(s) + ".c" + std::to_string(k)), 2, in, out,
                  g, ActivationKind::LeakyRelu, cfg.leaky_slope);
      in = out;
    }
    if (s < kFrequencyPools) net->add<nn::MaxPool>(2, PoolGeometry{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}});
  }
  conv_bn_act(*net, join(prefix, "proj"), 2, in, cfg.out_channels, ConvGeometry{},
              ActivationKind::LeakyRelu, cfg.leaky_slope);
  return net;
}

std::unique_ptr<nn::Residual> make_bottleneck(const std::string& name, std::size_t in_channels,
                                              std::size_t out_channels, std::size_t cardinality,
                                              Triple stride) {
  const std::size_t mid = out_channels / 2;
  auto branch = std::make_unique<nn::Sequential>();
  conv_bn_act(*branch, name + ".a", 3, in_channels, mid, ConvGeometry{}, ActivationKind::Relu, 0.0);
  conv_bn_act(*branch, name + ".b", 3, mid, mid,
              ConvGeometry{{3, 3, 3}, stride, {1, 1, 1}, cardinality}, ActivationKind::Relu, 0.0);
  branch->add<nn::Conv>(name + ".c.conv", 3, mid, out_channels, ConvGeometry{}, false);
  branch->add<nn::BatchNorm>(name + ".c.bn", out_channels);

  auto shortcut = std::make_unique<nn::Sequential>();
  if (in_channels != out_channels || stride != Triple{1, 1, 1}) {
    shortcut->add<nn::Conv>(name + ".down.conv", 3, in_channels, out_channels,
                            ConvGeometry{{1, 1, 1}, stride, {0, 0, 0}, 1}, false);
    shortcut->add<nn::BatchNorm>(name + ".down.bn", out_channels);
  }
  return std::make_unique<nn::Residual>(std::move(branch), std::move(shortcut),
                                        std::make_unique<nn::Activation>(ActivationKind::Relu));
}

std::unique_ptr<nn::Sequential> build_time_backbone(const TimeBackboneConfig& cfg,
                                                    const std::string& prefix) {
  validate(cfg);
  auto net = std::make_unique<nn::Sequential>();
  std::size_t depth = cfg.depth;
  auto temporal_stride = [&depth]() -> std::size_t {
    if (depth <= 1) return 1;
    depth = (depth - 1) / 2 + 1;  // kernel 3, pad 1, stride 2
    return 2;
  };

  const std::size_t kd = cfg.stem_kernel_depth, k = cfg.stem_kernel;
  conv_bn_act(*net, join(prefix, "stem"), 3, cfg.input_channels, cfg.stem_width,
              ConvGeometry{{kd, k, k}, {1, 2, 2}, {kd / 2, k / 2, k / 2}, 1}, ActivationKind::Relu, 0.0);
  const std::size_t ts = temporal_stride();
  net->add<nn::MaxPool>(3, PoolGeometry{{ts == 2 ? 3u : 1u, 3, 3}, {ts, 2, 2}, {ts == 2 ? 1u : 0u, 1, 1}});

  std::size_t in = cfg.stem_width;
  for (std::size_t s = 0; s < kTimeStages; ++s) {
    for (std::size_t b = 0; b < cfg.stage_blocks[s]; ++b) {
      Triple stride{1, 1, 1};
      if (s > 0 && b == 0) stride = {temporal_stride(), 2, 2};
      net->push(make_bottleneck(join(prefix, "s" + std::to_string(s) + ".b" + std::to_string(b)), in,
                                cfg.stage_widths[s], cfg.cardinality, stride));
      in = cfg.stage_widths[s];
    }
  }
  if (in != cfg.out_channels) {
    conv_bn_act(*net, join(prefix, "proj"), 3, in, cfg.out_channels, ConvGeometry{},
                ActivationKind::Relu, 0.0);
  }
  net->add<nn::TemporalPool>(cfg.pool);
  return net;
}

}  // namespace tfnet
