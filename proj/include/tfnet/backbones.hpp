#pragma once

#include <memory>
#include <vector>

#include "tfnet/layers.hpp"

namespace tfnet {

enum class Scale { Full, Micro };

// Darknet-19 from its fifth convolution onwards (56x56 input) up to, but not
// including, the classifier convolution, followed by a 1x1 projection to
// out_channels. Stage i holds stage_convs[i] convolutions alternating 3x3 at
// widths[i] and 1x1 at widths[i]/2; the first three stages end in a 2x2
// max pool, so the spatial reduction is 8.
struct FrequencyBackboneConfig {
  std::size_t input_channels = 192;
  std::vector<std::size_t> widths{128, 256, 512, 1024};
  std::vector<std::size_t> stage_convs{1, 3, 5, 5};
  std::size_t out_channels = 425;
  double leaky_slope = 0.1;

  static FrequencyBackboneConfig full(std::size_t input_channels);
  static FrequencyBackboneConfig micro(std::size_t input_channels);
};

// 3D-ResNeXt pattern: stem conv (spatial stride 2) + 3x3x3 max pool (stride 2),
// four stages of bottleneck blocks with grouped 3x3x3 convolutions (stages
// 2-4 downsample by 2), optional 1x1x1 projection, then a temporal pool to
// depth 1. Spatial reduction is 32; depth halves at each downsampling point
// while it is above 1.
struct TimeBackboneConfig {
  std::size_t input_channels = 3;
  std::size_t depth = 16;
  std::size_t stem_width = 64;
  std::size_t stem_kernel_depth = 7;
  std::size_t stem_kernel = 7;
  std::vector<std::size_t> stage_blocks{3, 4, 23, 3};
  std::vector<std::size_t> stage_widths{256, 512, 1024, 2048};
  std::size_t cardinality = 32;
  std::size_t out_channels = 2048;
  nn::TemporalPoolKind pool = nn::TemporalPoolKind::Average;

  static TimeBackboneConfig full(std::size_t depth);
  static TimeBackboneConfig micro(std::size_t depth);
};

// Throws ConfigError on invalid settings.
void validate(const FrequencyBackboneConfig& cfg);
void validate(const TimeBackboneConfig& cfg);

// Input N x C_f x 56k x 56k  ->  N x C1 x 7k x 7k.
std::unique_ptr<nn::Sequential> build_frequency_backbone(const FrequencyBackboneConfig& cfg,
                                                         const std::string& prefix = "freq");
// Input N x 3 x D x H x W  ->  N x C2 x H/32 x W/32.
std::unique_ptr<nn::Sequential> build_time_backbone(const TimeBackboneConfig& cfg,
                                                    const std::string& prefix = "time");

// One ResNeXt bottleneck: 1x1x1 -> grouped 3x3x3 (stride) -> 1x1x1, each with
// batchnorm, plus a projection shortcut when the shape changes, then ReLU.
std::unique_ptr<nn::Residual> make_bottleneck(const std::string& name, std::size_t in_channels,
                                              std::size_t out_channels, std::size_t cardinality,
                                              nn::Triple stride);

}  // namespace tfnet
