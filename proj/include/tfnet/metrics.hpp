#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tfnet/box.hpp"

namespace tfnet {

// All-point interpolated AP of one class. Detections are matched in
// descending score order to the best-overlapping unmatched GT box of the same
// frame and class. Returns nullopt when the class has neither GT nor
// detections, 0 when it has detections but no GT.
std::optional<double> average_precision(const std::vector<Detection>& detections,
                                        const std::vector<GroundTruthFrame>& ground_truth,
                                        std::size_t class_id, double iou_threshold = 0.5);

struct EvalReport {
  std::vector<std::optional<double>> per_class_ap;  // nullopt = excluded
  double map = 0.0;
  double cls_accuracy = 0.0;

  std::size_t evaluated_classes() const;
};

// Per-class AP pooled over all frames, their mean over the classes that have
// an AP, and cls_accuracy. Throws DataError when no class has GT.
EvalReport frame_map(const std::vector<Detection>& detections,
                     const std::vector<GroundTruthFrame>& ground_truth, std::size_t num_classes,
                     double iou_threshold = 0.5);

// Fraction of GT-bearing frames whose top-scoring detection carries one of the
// frame's GT classes; frames without detections count as wrong.
double classification_accuracy(const std::vector<Detection>& detections,
                               const std::vector<GroundTruthFrame>& ground_truth);

// Fraction of GT-bearing frames whose top-scoring detection overlaps some GT
// box by at least iou_threshold, regardless of class.
double localization_accuracy(const std::vector<Detection>& detections,
                             const std::vector<GroundTruthFrame>& ground_truth,
                             double iou_threshold = 0.5);

// Detection dump: one `frame_id class_id score x1 y1 x2 y2` line per detection.
void write_detections(std::ostream& out, const std::vector<Detection>& detections);
std::vector<Detection> read_detections(std::istream& in);

// Per-class AP table (`class_id name AP`, '-' for excluded classes) followed
// by `mAP` and `cls-accuracy` lines. Values are printed so that parsing them
// back yields the same doubles.
void write_ap_table(std::ostream& out, const EvalReport& report,
                    const std::vector<std::string>& class_names);

struct ApTable {
  std::vector<std::string> class_names;
  EvalReport report;
};
ApTable read_ap_table(std::istream& in);

// Shortest fixed-point text (at least three decimals) that reads back as v.
std::string format_exact(double v);

}  // namespace tfnet
