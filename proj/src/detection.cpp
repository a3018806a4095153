#include "tfnet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

struct GridView {
  const Tensor& t;
  std::size_t S;
  double at(std::size_t c, std::size_t i, std::size_t j) const { return t[(c * S + i) * S + j]; }
};

std::size_t check_grid(const Tensor& grid, const GridLayout& layout) {
  if (grid.rank() != 3 || grid.dim(0) != layout.channels() || grid.dim(1) != grid.dim(2)) {
    throw ShapeError("detection grid " + shape_string(grid.shape()) + " is not " +
                     std::to_string(layout.channels()) + " x S x S");
  }
  return grid.dim(1);
}

// Softmax over the class logits of one slot.
std::vector<double> class_probabilities(const GridView& v, const GridLayout& layout, std::size_t a,
                                        std::size_t i, std::size_t j) {
  std::vector<double> p(layout.num_classes);
  double mx = -INFINITY;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = v.at(layout.channel(a, 5 + k), i, j);
    mx = std::max(mx, p[k]);
  }
  double total = 0.0;
  for (auto& x : p) {
    x = std::exp(x - mx);
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

double centered_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  return inter / (w1 * h1 + w2 * h2 - inter);
}

Box center_box(double cx, double cy, double w, double h) {
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

}  // namespace

std::vector<Anchor> default_anchors() {
  return {{0.05, 0.08}, {0.1, 0.2}, {0.2, 0.4}, {0.4, 0.6}, {0.7, 0.8}};
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<Detection> decode(const Tensor& grid, std::span<const Anchor> anchors,
                              std::size_t num_classes, double image_width, double image_height,
                              double conf_threshold, std::size_t frame_id) {
  const GridLayout layout{num_classes, anchors.size()};
  const std::size_t S = check_grid(grid, layout);
  const GridView v{grid, S};
  std::vector<Detection> out;
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const double conf = sigmoid(v.at(layout.channel(a, 4), i, j));
        const auto probs = class_probabilities(v, layout, a, i, j);
        const auto best = std::max_element(probs.begin(), probs.end());
        const double score = conf * *best;
        if (score < conf_threshold) continue;
        const double cx = (j + sigmoid(v.at(layout.channel(a, 0), i, j))) / S;
        const double cy = (i + sigmoid(v.at(layout.channel(a, 1), i, j))) / S;
        const double w = anchors[a].width * std::exp(v.at(layout.channel(a, 2), i, j));
        const double h = anchors[a].height * std::exp(v.at(layout.channel(a, 3), i, j));
        Box b = center_box(cx * image_width, cy * image_height, w * image_width, h * image_height);
        b.x1 = std::clamp(b.x1, 0.0, image_width);
        b.x2 = std::clamp(b.x2, 0.0, image_width);
        b.y1 = std::clamp(b.y1, 0.0, image_height);
        b.y2 = std::clamp(b.y2, 0.0, image_height);
        out.push_back({frame_id, static_cast<std::size_t>(best - probs.begin()), score, b});
      }
  return out;
}

Assignment assign_targets(const GroundTruthFrame& frame, double image_width, double image_height,
                          std::span<const Anchor> anchors, std::size_t grid_size) {
  if (grid_size == 0 || anchors.empty()) throw ConfigError("assignment needs a grid and anchors");
  Assignment as{grid_size, {}, 0};
  std::vector<bool> taken(grid_size * grid_size * anchors.size(), false);
  for (const auto& gt : frame.boxes) {
    const double w = gt.box.width() / image_width, h = gt.box.height() / image_height;
    const double cx = (gt.box.x1 + gt.box.x2) / 2 / image_width;
    const double cy = (gt.box.y1 + gt.box.y2) / 2 / image_height;
    if (w <= 0 || h <= 0) continue;
    const auto cell = [grid_size](double c) {
      return std::min(static_cast<std::size_t>(std::max(0.0, std::floor(c * grid_size))), grid_size - 1);
    };
    const std::size_t row = cell(cy), col = cell(cx);
    std::size_t best = 0;
    double best_iou = -1.0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const double v = centered_iou(w, h, anchors[a].width, anchors[a].height);
      if (v > best_iou) {
        best_iou = v;
        best = a;
      }
    }
    const std::size_t slot = (row * grid_size + col) * anchors.size() + best;
    if (taken[slot]) {
      ++as.dropped;
      continue;
    }
    taken[slot] = true;
    as.targets.push_back({row, col, best, gt.class_id, cx, cy, w, h});
  }
  return as;
}

std::vector<double> objectness_targets(const Tensor& grid, const Assignment& assignment,
                                       std::span<const Anchor> anchors, std::size_t num_classes) {
  const GridLayout layout{num_classes, anchors.size()};
  const std::size_t S = check_grid(grid, layout);
  const GridView v{grid, S};
  std::vector<double> out;
  out.reserve(assignment.targets.size());
  for (const auto& t : assignment.targets) {
    const double cx = (t.col + sigmoid(v.at(layout.channel(t.anchor, 0), t.row, t.col))) / S;
    const double cy = (t.row + sigmoid(v.at(layout.channel(t.anchor, 1), t.row, t.col))) / S;
    const double w = anchors[t.anchor].width * std::exp(v.at(layout.channel(t.anchor, 2), t.row, t.col));
    const double h = anchors[t.anchor].height * std::exp(v.at(layout.channel(t.anchor, 3), t.row, t.col));
    out.push_back(iou(center_box(cx, cy, w, h), center_box(t.cx, t.cy, t.w, t.h)));
  }
  return out;
}

LossResult detection_loss(const Tensor& grid, const Assignment& assignment,
                          std::span<const Anchor> anchors, std::size_t num_classes,
                          const LossWeights& weights, std::span<const double> iou_targets) {
  const GridLayout layout{num_classes, anchors.size()};
  const std::size_t S = check_grid(grid, layout);
  if (assignment.grid_size != S) throw ShapeError("assignment grid size differs from the head grid");
  if (iou_targets.size() != assignment.targets.size()) {
    throw ShapeError("one objectness target per assigned box is required");
  }
  const GridView v{grid, S};
  LossResult r;
  r.grad = Tensor(grid.shape());
  auto gidx = [&](std::size_t a, std::size_t field, std::size_t i, std::size_t j) {
    return (layout.channel(a, field) * S + i) * S + j;
  };

  std::vector<bool> responsible(S * S * anchors.size(), false);
  for (std::size_t n = 0; n < assignment.targets.size(); ++n) {
    const Target& t = assignment.targets[n];
    const std::size_t a = t.anchor, i = t.row, j = t.col;
    if (t.class_id >= num_classes) throw DomainError("target class id out of range");
    responsible[(i * S + j) * anchors.size() + a] = true;

    // Centre offsets within the cell.
    const double sx = sigmoid(v.at(layout.channel(a, 0), i, j));
    const double sy = sigmoid(v.at(layout.channel(a, 1), i, j));
    const double ox = t.cx * S - j, oy = t.cy * S - i;
    // Square-root sizes.
    const double qw = std::sqrt(anchors[a].width) * std::exp(v.at(layout.channel(a, 2), i, j) / 2);
    const double qh = std::sqrt(anchors[a].height) * std::exp(v.at(layout.channel(a, 3), i, j) / 2);
    const double rw = std::sqrt(t.w), rh = std::sqrt(t.h);

    r.coord += weights.coord * ((sx - ox) * (sx - ox) + (sy - oy) * (sy - oy) +
                                (qw - rw) * (qw - rw) + (qh - rh) * (qh - rh));
    r.grad[gidx(a, 0, i, j)] += weights.coord * 2 * (sx - ox) * sx * (1 - sx);
    r.grad[gidx(a, 1, i, j)] += weights.coord * 2 * (sy - oy) * sy * (1 - sy);
    r.grad[gidx(a, 2, i, j)] += weights.coord * (qw - rw) * qw;
    r.grad[gidx(a, 3, i, j)] += weights.coord * (qh - rh) * qh;

    const double so = sigmoid(v.at(layout.channel(a, 4), i, j));
    r.objectness += (so - iou_targets[n]) * (so - iou_targets[n]);
    r.grad[gidx(a, 4, i, j)] += 2 * (so - iou_targets[n]) * so * (1 - so);

    // Cross-entropy via log-sum-exp.
    double mx = -INFINITY;
    for (std::size_t k = 0; k < num_classes; ++k) mx = std::max(mx, v.at(layout.channel(a, 5 + k), i, j));
    double total = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) total += std::exp(v.at(layout.channel(a, 5 + k), i, j) - mx);
    const double log_z = mx + std::log(total);
    r.classification += log_z - v.at(layout.channel(a, 5 + t.class_id), i, j);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double p = std::exp(v.at(layout.channel(a, 5 + k), i, j) - log_z);
      r.grad[gidx(a, 5 + k, i, j)] += p - (k == t.class_id ? 1.0 : 0.0);
    }
  }

  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        if (responsible[(i * S + j) * anchors.size() + a]) continue;
        const double so = sigmoid(v.at(layout.channel(a, 4), i, j));
        r.no_object += weights.noobj * so * so;
        r.grad[gidx(a, 4, i, j)] += weights.noobj * 2 * so * so * (1 - so);
      }

  r.total = r.coord + r.objectness + r.no_object + r.classification;
  return r;
}

LossResult detection_loss(const Tensor& grid, const Assignment& assignment,
                          std::span<const Anchor> anchors, std::size_t num_classes,
                          const LossWeights& weights) {
  const auto targets = objectness_targets(grid, assignment, anchors, num_classes);
  return detection_loss(grid, assignment, anchors, num_classes, weights, targets);
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.class_id < b.class_id;
  });
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == d.class_id && k.frame_id == d.frame_id && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace tfnet
