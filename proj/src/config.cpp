#include "tfnet/config.hpp"

#include <fstream>

#include "tfnet/dct.hpp"
#include "tfnet/error.hpp"

namespace tfnet {

using nlohmann::json;

namespace {

void merge(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key " + prefix) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge(slot, it.value(), key);
    } else {
      const bool numeric = slot.is_number() && it.value().is_number();
      if (slot.type() != it.value().type() && !numeric) {
        throw ConfigError("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                          it.value().type_name());
      }
      slot = it.value();
    }
  }
}

template <typename T>
T get(const json& doc, const char* section, const char* key) {
  const json& v = doc.at(section).at(key);
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("config key '") + section + "." + key + "' has an invalid value " + v.dump());
  }
}

void require_positive(bool ok, const std::string& key) {
  if (!ok) throw ConfigError("config key '" + key + "' must be positive");
}

}  // namespace

std::size_t ModelConfig::per_component_channels() const {
  return dct_channels ? dct_channels : channels_for_lambda(lambda);
}

ClipOptions InputConfig::clip_options() const {
  ClipOptions o;
  o.depth = depth;
  o.frame_size = frame_size;
  o.keyframe_size = keyframe_size;
  o.keyframe = keyframe == "first" ? KeyframeChoice::First
               : keyframe == "middle" ? KeyframeChoice::Middle
                                      : KeyframeChoice::Last;
  return o;
}

json default_config_json() {
  return to_json(RunConfig{});
}

json to_json(const RunConfig& c) {
  json anchors = json::array();
  for (const auto& a : c.model.anchors) anchors.push_back({a.width, a.height});
  return {
      {"model",
       {{"scale", c.model.scale},
        {"lambda", c.model.lambda},
        {"dct_channels", c.model.dct_channels},
        {"time_only", c.model.time_only},
        {"temporal_pool", c.model.temporal_pool},
        {"num_classes", c.model.num_classes},
        {"anchors", anchors}}},
      {"input",
       {{"depth", c.input.depth},
        {"frame_size", c.input.frame_size},
        {"keyframe_size", c.input.keyframe_size},
        {"keyframe", c.input.keyframe}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"momentum", c.train.momentum},
        {"lr", c.train.lr},
        {"halving_interval", c.train.halving_interval},
        {"epochs", c.train.epochs},
        {"max_iterations", c.train.max_iterations},
        {"seed", c.train.seed},
        {"clip_norm", c.train.clip_norm},
        {"augment", c.train.augment},
        {"max_stride", c.train.max_stride},
        {"random_start", c.train.random_start},
        {"checkpoint_every", c.train.checkpoint_every}}},
      {"loss", {{"coord", c.loss.coord}, {"noobj", c.loss.noobj}}},
      {"eval", {{"conf_threshold", c.eval.conf_threshold}, {"nms_iou", c.eval.nms_iou}, {"iou", c.eval.iou}}},
  };
}

RunConfig parse_config(const json& overrides) {
  json doc = default_config_json();
  if (!overrides.is_null()) merge(doc, overrides, "");

  RunConfig c;
  c.model.scale = get<std::string>(doc, "model", "scale");
  c.model.lambda = get<double>(doc, "model", "lambda");
  c.model.dct_channels = get<std::size_t>(doc, "model", "dct_channels");
  c.model.time_only = get<bool>(doc, "model", "time_only");
  c.model.temporal_pool = get<std::string>(doc, "model", "temporal_pool");
  c.model.num_classes = get<std::size_t>(doc, "model", "num_classes");
  c.model.anchors.clear();
  for (const auto& a : doc["model"]["anchors"]) {
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
      throw ConfigError("config key 'model.anchors' needs [width, height] pairs");
    }
    const Anchor anchor{a[0].get<double>(), a[1].get<double>()};
    if (!(anchor.width > 0 && anchor.height > 0)) throw ConfigError("anchor sizes must be positive");
    c.model.anchors.push_back(anchor);
  }
  if (c.model.anchors.empty()) throw ConfigError("config key 'model.anchors' is empty");
  if (c.model.scale != "micro" && c.model.scale != "full") {
    throw ConfigError("config key 'model.scale' must be micro or full");
  }
  if (c.model.temporal_pool != "avg" && c.model.temporal_pool != "max") {
    throw ConfigError("config key 'model.temporal_pool' must be avg or max");
  }
  if (c.model.dct_channels > 64) throw ConfigError("config key 'model.dct_channels' exceeds 64");
  try {
    channels_for_lambda(c.model.lambda);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config key 'model.lambda': ") + e.what());
  }

  c.input.depth = get<std::size_t>(doc, "input", "depth");
  c.input.frame_size = get<std::size_t>(doc, "input", "frame_size");
  c.input.keyframe_size = get<std::size_t>(doc, "input", "keyframe_size");
  c.input.keyframe = get<std::string>(doc, "input", "keyframe");
  require_positive(c.input.depth > 0, "input.depth");
  if (c.input.frame_size == 0 || c.input.frame_size % 32 != 0) {
    throw ConfigError("config key 'input.frame_size' must be a positive multiple of 32");
  }
  if (c.input.keyframe_size != 2 * c.input.frame_size) {
    throw ConfigError("config key 'input.keyframe_size' must be twice input.frame_size so both branches meet on one grid");
  }
  if (c.input.keyframe != "first" && c.input.keyframe != "middle" && c.input.keyframe != "last") {
    throw ConfigError("config key 'input.keyframe' must be first, middle or last");
  }

  c.train.batch_size = get<std::size_t>(doc, "train", "batch_size");
  c.train.momentum = get<double>(doc, "train", "momentum");
  c.train.lr = get<double>(doc, "train", "lr");
  c.train.halving_interval = get<std::size_t>(doc, "train", "halving_interval");
  c.train.epochs = get<std::size_t>(doc, "train", "epochs");
  c.train.max_iterations = get<std::size_t>(doc, "train", "max_iterations");
  c.train.seed = get<std::uint64_t>(doc, "train", "seed");
  c.train.clip_norm = get<double>(doc, "train", "clip_norm");
  c.train.augment = get<bool>(doc, "train", "augment");
  c.train.max_stride = get<std::size_t>(doc, "train", "max_stride");
  c.train.random_start = get<bool>(doc, "train", "random_start");
  c.train.checkpoint_every = get<std::size_t>(doc, "train", "checkpoint_every");
  require_positive(c.train.batch_size > 0, "train.batch_size");
  require_positive(c.train.lr > 0, "train.lr");
  require_positive(c.train.halving_interval > 0, "train.halving_interval");
  require_positive(c.train.epochs > 0, "train.epochs");
  require_positive(c.train.max_stride > 0, "train.max_stride");
  if (c.train.momentum < 0 || c.train.momentum >= 1) throw ConfigError("config key 'train.momentum' must lie in [0, 1)");
  if (c.train.clip_norm < 0) throw ConfigError("config key 'train.clip_norm' must be non-negative");

  c.loss.coord = get<double>(doc, "loss", "coord");
  c.loss.noobj = get<double>(doc, "loss", "noobj");
  c.eval.conf_threshold = get<double>(doc, "eval", "conf_threshold");
  c.eval.nms_iou = get<double>(doc, "eval", "nms_iou");
  c.eval.iou = get<double>(doc, "eval", "iou");
  if (c.loss.coord < 0 || c.loss.noobj < 0) throw ConfigError("loss weights must be non-negative");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(doc);
}

}  // namespace tfnet
