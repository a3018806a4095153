#pragma once

#include <cstddef>
#include <vector>

namespace tfnet {

// Axis-aligned box in corner form (x1, y1) - (x2, y2).
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return (x2 > x1 && y2 > y1) ? width() * height() : 0.0; }

  friend bool operator==(const Box&, const Box&) = default;
};

// Intersection over union; 0 for disjoint or degenerate boxes.
double iou(const Box& a, const Box& b);

struct GroundTruthBox {
  std::size_t class_id = 0;
  Box box;
};

// Labelled boxes of a single frame, in pixel coordinates.
struct GroundTruthFrame {
  std::size_t frame_id = 0;
  std::vector<GroundTruthBox> boxes;
};

struct Detection {
  std::size_t frame_id = 0;
  std::size_t class_id = 0;
  double score = 0.0;
  Box box;
};

}  // namespace tfnet
