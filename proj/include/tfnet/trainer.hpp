#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "tfnet/checkpoint.hpp"
#include "tfnet/config.hpp"
#include "tfnet/data.hpp"
#include "tfnet/metrics.hpp"
#include "tfnet/model.hpp"

namespace tfnet {

// initial_lr * 0.5^floor(iteration / halving_interval)
double lr_schedule(std::size_t iteration, const TrainConfig& cfg);

struct TrainState {
  std::vector<nn::Parameter*> parameters;
  std::vector<Tensor> velocity;  // one per parameter, same shape
  std::size_t iteration = 0;
  std::size_t epoch = 0;
};

TrainState make_train_state(std::vector<nn::Parameter*> parameters);

// v <- momentum * v + g;  p <- p - lr * v
void sgd_step(TrainState& state, std::span<const Tensor> gradients, double lr, double momentum);
// Same using each parameter's accumulated gradient.
void sgd_step(TrainState& state, double lr, double momentum);

// Rescales all gradients so their global L2 norm is at most max_norm; returns
// the norm before rescaling.
double clip_gradients(const std::vector<nn::Parameter*>& parameters, double max_norm);

struct TrainOptions {
  std::filesystem::path checkpoint;  // empty: no checkpoint files
  std::ostream* log = nullptr;       // `iter loss lr` lines
  std::vector<std::string> class_names;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<double> learning_rates;
  std::size_t iterations = 0;
  std::size_t epochs = 0;
};

// Minibatch SGD over the index. Deterministic for a given seed and thread
// count. Throws NumericalError on a non-finite loss.
TrainResult train(const DatasetIndex& index, const RunConfig& cfg, TFNetModel& model, const TrainOptions& options);

// Checkpoint metadata carries the effective config and the class names.
Checkpoint make_checkpoint(TFNetModel& model, const RunConfig& cfg, const std::vector<std::string>& class_names,
                           std::uint64_t step);
struct LoadedModel {
  RunConfig config;
  std::vector<std::string> class_names;
  std::unique_ptr<TFNetModel> model;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

struct Evaluation {
  std::vector<Detection> detections;
  std::vector<GroundTruthFrame> ground_truth;  // source pixels, keyed by frame_uid
  EvalReport report;
  double localization = 0.0;
};

// Detections of one clip in source pixel coordinates, after NMS.
std::vector<Detection> detect(TFNetModel& model, const RunConfig& cfg, const ClipSample& clip, std::size_t frame_id);
// One clip per video (start 0, stride 1), scored against the labels of its keyframe.
Evaluation evaluate(TFNetModel& model, const DatasetIndex& index, const RunConfig& cfg);

struct SaliencyResult {
  std::vector<Tensor> frame_maps;    // one H x W map per input frame
  std::vector<Tensor> channel_maps;  // one map per DCT channel (empty when time-only)
  bool fallback = false;             // no detection above threshold; max logit used
  Detection target;
};

// Guided backpropagation of the top detection's class score (or the largest
// class logit) to both inputs. Leaves every rectifier's recorded input and
// guided gradient in place for inspection.
SaliencyResult guided_backprop(TFNetModel& model, const RunConfig& cfg, const ClipSample& clip);
// frame_XXX and dct_<component>_XX images in the given format ("png" or "pgm").
void write_saliency(const SaliencyResult& result, const std::filesystem::path& dir, const std::string& format = "png");

}  // namespace tfnet
