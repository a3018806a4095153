#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfnet/data.hpp"
#include "tfnet/detection.hpp"

namespace tfnet {

struct ModelConfig {
  std::string scale = "micro";      // "micro" or "full"
  double lambda = 1.0;              // DCT channel ratio
  std::size_t dct_channels = 0;     // per component; 0 derives it from lambda
  bool time_only = false;           // drop the frequency branch
  std::string temporal_pool = "avg";
  std::size_t num_classes = 0;      // 0 takes the dataset's class count
  std::vector<Anchor> anchors = default_anchors();

  std::size_t per_component_channels() const;
};

struct InputConfig {
  std::size_t depth = 16;
  std::size_t frame_size = 224;
  std::size_t keyframe_size = 448;
  std::string keyframe = "last";    // first | middle | last

  ClipOptions clip_options() const;
};

struct TrainConfig {
  std::size_t batch_size = 12;
  double momentum = 0.9;
  double lr = 1e-4;
  std::size_t halving_interval = 10000;
  std::size_t epochs = 25;
  std::size_t max_iterations = 0;   // 0: run all epochs
  std::uint64_t seed = 0;
  double clip_norm = 10.0;          // 0 disables clipping
  bool augment = true;
  std::size_t max_stride = 2;
  bool random_start = true;
  std::size_t checkpoint_every = 0; // 0: final checkpoint only
};

struct EvalConfig {
  double conf_threshold = 0.005;
  double nms_iou = 0.5;
  double iou = 0.5;
};

struct RunConfig {
  ModelConfig model;
  InputConfig input;
  TrainConfig train;
  LossWeights loss;
  EvalConfig eval;
};

// Defaults as a JSON document; every accepted key appears here.
nlohmann::json default_config_json();

// Merges `overrides` into the defaults. Unknown keys and mistyped values
// throw ConfigError naming the dotted key.
RunConfig parse_config(const nlohmann::json& overrides);
nlohmann::json to_json(const RunConfig& cfg);

// Applies `a.b.c=value` (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Reads a JSON config file (empty path: defaults) and applies overrides in order.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace tfnet
