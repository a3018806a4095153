#pragma once

#include <span>
#include <vector>

#include "tfnet/box.hpp"
#include "tfnet/tensor.hpp"

namespace tfnet {

// Anchor prior; width and height are fractions of the image size.
struct Anchor {
  double width = 0;
  double height = 0;
};

std::vector<Anchor> default_anchors();

// Layout of a C x S x S head tensor: slot a occupies channels
// a*(5+N) .. a*(5+N)+4+N holding tx, ty, tw, th, to, class logits.
struct GridLayout {
  std::size_t num_classes = 0;
  std::size_t anchors = 5;

  std::size_t slot_size() const { return 5 + num_classes; }
  std::size_t channels() const { return anchors * slot_size(); }
  std::size_t channel(std::size_t anchor, std::size_t field) const { return anchor * slot_size() + field; }
};

double sigmoid(double x);

// One detection per (cell, anchor) whose confidence * max class probability
// reaches conf_threshold, in pixel corners clipped to the image.
std::vector<Detection> decode(const Tensor& grid, std::span<const Anchor> anchors,
                              std::size_t num_classes, double image_width, double image_height,
                              double conf_threshold, std::size_t frame_id = 0);

struct Target {
  std::size_t row = 0, col = 0, anchor = 0;
  std::size_t class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;  // fractions of the image
};

struct Assignment {
  std::size_t grid_size = 0;
  std::vector<Target> targets;
  std::size_t dropped = 0;  // GT boxes whose (cell, anchor) was already taken
};

// Centre-cell / best-anchor assignment. GT boxes are pixel corners in an
// image of the given size.
Assignment assign_targets(const GroundTruthFrame& frame, double image_width, double image_height,
                          std::span<const Anchor> anchors, std::size_t grid_size);

struct LossWeights {
  double coord = 5.0;
  double noobj = 0.5;
};

struct LossResult {
  double total = 0.0;
  double coord = 0.0;
  double objectness = 0.0;
  double no_object = 0.0;
  double classification = 0.0;
  Tensor grad;  // d total / d grid
};

// IoU between each target's decoded prediction and its GT box; used as the
// objectness target.
std::vector<double> objectness_targets(const Tensor& grid, const Assignment& assignment,
                                       std::span<const Anchor> anchors, std::size_t num_classes);

// Sum-squared YOLO loss with the IoU objectness targets held constant.
LossResult detection_loss(const Tensor& grid, const Assignment& assignment,
                          std::span<const Anchor> anchors, std::size_t num_classes,
                          const LossWeights& weights, std::span<const double> iou_targets);
LossResult detection_loss(const Tensor& grid, const Assignment& assignment,
                          std::span<const Anchor> anchors, std::size_t num_classes,
                          const LossWeights& weights = {});

// Per-class greedy suppression of boxes overlapping a kept box by more than
// iou_threshold. Output is ordered by descending score, then class id.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

}  // namespace tfnet
