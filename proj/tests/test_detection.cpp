#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tfnet/detection.hpp"

using namespace tfnet;

namespace {

double logit(double p) { return std::log(p / (1 - p)); }

// Grid whose responsible slots reproduce the assigned GT exactly.
Tensor encode(const Assignment& as, std::span<const Anchor> anchors, std::size_t classes, double background) {
  const GridLayout L{classes, anchors.size()};
  const std::size_t S = as.grid_size;
  Tensor g({L.channels(), S, S}, background);
  auto at = [&](std::size_t a, std::size_t f, std::size_t i, std::size_t j) -> double& {
    return g[(L.channel(a, f) * S + i) * S + j];
  };
  for (const auto& t : as.targets) {
    at(t.anchor, 0, t.row, t.col) = logit(t.cx * S - t.col);
    at(t.anchor, 1, t.row, t.col) = logit(t.cy * S - t.row);
    at(t.anchor, 2, t.row, t.col) = std::log(t.w / anchors[t.anchor].width);
    at(t.anchor, 3, t.row, t.col) = std::log(t.h / anchors[t.anchor].height);
    at(t.anchor, 4, t.row, t.col) = 40.0;
    for (std::size_t k = 0; k < classes; ++k) at(t.anchor, 5 + k, t.row, t.col) = k == t.class_id ? 40.0 : -40.0;
  }
  return g;
}

GroundTruthFrame random_frame(std::mt19937_64& rng, std::size_t boxes, std::size_t classes, double size) {
  std::uniform_real_distribution<double> u(0, 1);
  GroundTruthFrame f;
  for (std::size_t b = 0; b < boxes; ++b) {
    const double w = size * (0.1 + 0.5 * u(rng)), h = size * (0.1 + 0.5 * u(rng));
    const double x = (size - w) * u(rng), y = (size - h) * u(rng);
    f.boxes.push_back({static_cast<std::size_t>(rng() % classes), Box{x, y, x + w, y + h}});
  }
  return f;
}

}  // namespace

TEST(Decode, CentreAndSizeFromZeroOffsets) {
  const auto anchors = default_anchors();
  const GridLayout L{2, anchors.size()};
  Tensor g({L.channels(), 7, 7});
  const auto dets = decode(g, anchors, 2, 700, 700, 0.0);
  ASSERT_EQ(dets.size(), 245u);
  for (const auto& d : dets) {
    if (d.box.x1 == 0 || d.box.y1 == 0 || d.box.x2 == 700 || d.box.y2 == 700) continue;
    const double cx = (d.box.x1 + d.box.x2) / 2, cy = (d.box.y1 + d.box.y2) / 2;
    EXPECT_NEAR(std::fmod(cx, 100.0), 50.0, 1e-9);
    EXPECT_NEAR(std::fmod(cy, 100.0), 50.0, 1e-9);
  }
  // Cell (3, 3), anchor 1 is unclipped: size equals the prior.
  const auto& d = dets[(3 * 7 + 3) * 5 + 1];
  EXPECT_NEAR(d.box.width(), 0.1 * 700, 1e-9);
  EXPECT_NEAR(d.box.height(), 0.2 * 700, 1e-9);
  EXPECT_NEAR(d.score, 0.5 * 0.5, 1e-12);
}

TEST(Decode, CentresStayInsideTheirCell) {
  std::mt19937_64 rng(3);
  const auto anchors = default_anchors();
  const Tensor g = oracle::random_tensor({GridLayout{3, 5}.channels(), 4, 4}, rng, -8, 8);
  const auto dets = decode(g, anchors, 3, 400, 400, 0.0);
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const std::size_t cell = k / 5, i = cell / 4, j = cell % 4;
    const double cx = (j + sigmoid(g[((k % 5) * 8 * 4 + i) * 4 + j])) * 100;
    EXPECT_GE(cx, j * 100.0);
    EXPECT_LE(cx, (j + 1) * 100.0);
    EXPECT_GE(dets[k].score, 0.0);
    EXPECT_LE(dets[k].score, 1.0);
    EXPECT_LE(dets[k].box.x2, 400.0);
    EXPECT_GE(dets[k].box.x1, 0.0);
  }
}

TEST(Assign, CellAndAnchorSelection) {
  const auto anchors = default_anchors();
  GroundTruthFrame centre{0, {{0, Box{300, 300, 400, 400}}}};
  auto as = assign_targets(centre, 700, 700, anchors, 7);
  ASSERT_EQ(as.targets.size(), 1u);
  EXPECT_EQ(as.targets[0].row, 3u);
  EXPECT_EQ(as.targets[0].col, 3u);
  GroundTruthFrame corner{0, {{0, Box{0, 0, 1, 1}}}};
  as = assign_targets(corner, 700, 700, anchors, 7);
  EXPECT_EQ(as.targets[0].row, 0u);
  EXPECT_EQ(as.targets[0].col, 0u);
  const std::vector<Anchor> two{{0.2, 0.2}, {0.2, 0.4}};
  GroundTruthFrame square{0, {{0, Box{10, 10, 30, 30}}}};
  EXPECT_EQ(assign_targets(square, 100, 100, two, 7).targets[0].anchor, 0u);
}

TEST(Assign, SecondBoxInTakenSlotIsDropped) {
  GroundTruthFrame f{0, {{0, Box{10, 10, 20, 20}}, {1, Box{11, 11, 21, 21}}}};
  const auto as = assign_targets(f, 100, 100, default_anchors(), 2);
  EXPECT_EQ(as.targets.size(), 1u);
  EXPECT_EQ(as.dropped, 1u);
}

TEST(Loss, EmptyFrameNoObjectLimit) {
  const auto anchors = default_anchors();
  Tensor g({GridLayout{2, 5}.channels(), 3, 3}, -60.0);
  const auto as = assign_targets(GroundTruthFrame{}, 100, 100, anchors, 3);
  const auto r = detection_loss(g, as, anchors, 2);
  EXPECT_GE(r.total, 0.0);
  EXPECT_LT(r.total, 1e-40);
}

TEST(Loss, PerfectPredictionLeavesOnlyNoObjectTerm) {
  const auto anchors = default_anchors();
  GroundTruthFrame f{0, {{1, Box{100, 120, 260, 300}}, {0, Box{420, 50, 600, 330}}}};
  const auto as = assign_targets(f, 700, 700, anchors, 7);
  ASSERT_EQ(as.targets.size(), 2u);
  const Tensor g = encode(as, anchors, 2, -3.0);
  const auto r = detection_loss(g, as, anchors, 2);
  const double sn = sigmoid(-3.0);
  const double expected = 0.5 * sn * sn * (7 * 7 * 5 - 2);
  EXPECT_NEAR(r.no_object, expected, 1e-12);
  EXPECT_NEAR(r.coord, 0.0, 1e-20);
  EXPECT_NEAR(r.objectness, 0.0, 1e-20);
  EXPECT_NEAR(r.classification, 0.0, 1e-20);
  EXPECT_NEAR(r.total, expected, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  for (int s = 0; s < 20; ++s) EXPECT_LT(gradcheck::check_detection_loss(s), 1e-4) << "seed " << s;
}

TEST(RoundTrip, EncodedGroundTruthDecodesBack) {
  const auto anchors = default_anchors();
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    GroundTruthFrame f = random_frame(rng, 3, 4, 448);
    const auto as = assign_targets(f, 448, 448, anchors, 7);
    const Tensor g = encode(as, anchors, 4, -40.0);
    const auto dets = nms(decode(g, anchors, 4, 448, 448, 0.5), 0.95);
    ASSERT_EQ(dets.size(), as.targets.size());
    for (const auto& t : as.targets) {
      const Box gt{(t.cx - t.w / 2) * 448, (t.cy - t.h / 2) * 448, (t.cx + t.w / 2) * 448, (t.cy + t.h / 2) * 448};
      double best = 0;
      for (const auto& d : dets)
        if (d.class_id == t.class_id) best = std::max(best, iou(d.box, gt));
      EXPECT_GE(best, 0.99);
    }
  }
}

TEST(Nms, Examples) {
  const Detection a{0, 0, 0.9, Box{0, 0, 10, 10}}, b{0, 0, 0.8, Box{0, 0, 10, 10}};
  auto kept = nms({b, a}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);
  const Detection c{0, 0, 0.7, Box{20, 20, 30, 30}};
  EXPECT_EQ(nms({a, c}, 0.5).size(), 2u);
  const Detection d{0, 0, 0.6, Box{0, 0, 10, 6}};
  EXPECT_NEAR(iou(a.box, d.box), 0.6, 1e-12);
  EXPECT_EQ(nms({a, d}, 0.5).size(), 1u);
  EXPECT_EQ(nms({a, d}, 0.7).size(), 2u);
  const Detection other_class{0, 1, 0.85, Box{0, 0, 10, 10}};
  kept = nms({a, b, other_class}, 0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1].class_id, 1u);
}
