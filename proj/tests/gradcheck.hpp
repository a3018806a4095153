#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tfnet/backbones.hpp"
#include "tfnet/detection.hpp"
#include "tfnet/fusion.hpp"
#include "tfnet/layers.hpp"

namespace gradcheck {

struct Result {
  double input = 0.0;  // worst relative error over input elements
  double params = 0.0; // worst over every parameter element
  double worst() const { return std::max(input, params); }
};

// Checks layer.backward against central differences of sum(w * forward(x)).
inline Result check_layer(tfnet::nn::Layer& layer, tfnet::Tensor x, std::uint64_t seed) {
  using namespace tfnet;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Shape out_shape = layer.output_shape(x.shape());
  const Tensor w = oracle::random_tensor(out_shape, rng);
  const auto bundle = nn::backward(layer, x, w);
  auto objective = [&]() { return dot(layer.forward(x, nn::Mode::Train), w); };

  Result r;
  r.input = oracle::max_relative_error(bundle.input_gradient, oracle::numeric_gradient(objective, x));
  const auto params = layer.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor numeric = oracle::numeric_gradient(objective, params[i]->value);
    r.params = std::max(r.params, oracle::max_relative_error(bundle.parameter_gradients[i], numeric));
  }
  return r;
}

// Pushes every value at least 1e-2 away from zero.
inline tfnet::Tensor away_from_zero(tfnet::Tensor t) {
  for (auto& v : t.data())
    if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
  return t;
}

// Smallest |input| seen by any rectifier visited by visit() after run().
inline double kink_margin(const std::function<void()>& run,
                          const std::function<void(const std::function<void(tfnet::nn::Layer&)>&)>& visit) {
  run();
  double m = std::numeric_limits<double>::infinity();
  visit([&](tfnet::nn::Layer& l) {
    if (auto* a = dynamic_cast<tfnet::nn::Activation*>(&l))
      for (double v : a->last_input().data()) m = std::min(m, std::abs(v));
  });
  return m;
}

inline constexpr double kMargin = 1e-3;
inline constexpr int kRedraws = 50;

struct LayerCase {
  std::string name;
  std::function<tfnet::nn::LayerPtr()> make;
  tfnet::Shape input;
};

inline void PrintTo(const LayerCase& c, std::ostream* os) { *os << c.name; }

// One entry per layer kind, on micro shapes.
inline std::vector<LayerCase> layer_cases() {
  using namespace tfnet;
  using namespace tfnet::nn;
  return {
      {"Conv2d", [] { return std::make_unique<Conv>("c", 2, 3, 4, ConvGeometry{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}, 1}); },
       {2, 3, 5, 5}},
      {"Conv3d", [] { return std::make_unique<Conv>("c", 3, 2, 3, ConvGeometry{{3, 3, 3}, {2, 1, 1}, {1, 1, 1}, 1}); },
       {2, 2, 4, 4, 4}},
      {"GroupedConv3d",
       [] { return std::make_unique<Conv>("g", 3, 4, 4, ConvGeometry{{3, 3, 3}, {1, 2, 2}, {1, 1, 1}, 2}, false); },
       {2, 4, 3, 4, 4}},
      {"MaxPool2d", [] { return std::make_unique<MaxPool>(2, PoolGeometry{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}}); },
       {2, 3, 6, 6}},
      {"MaxPool3d", [] { return std::make_unique<MaxPool>(3, PoolGeometry{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}}); },
       {1, 2, 4, 5, 5}},
      {"TemporalAveragePool", [] { return std::make_unique<TemporalPool>(TemporalPoolKind::Average); }, {2, 3, 4, 3, 3}},
      {"TemporalMaxPool", [] { return std::make_unique<TemporalPool>(TemporalPoolKind::Max); }, {2, 3, 4, 3, 3}},
      {"BatchNorm2d", [] { return std::make_unique<BatchNorm>("bn", 3); }, {3, 3, 4, 4}},
      {"BatchNorm3d", [] { return std::make_unique<BatchNorm>("bn", 2); }, {2, 2, 3, 3, 3}},
      {"Relu", [] { return std::make_unique<Activation>(ActivationKind::Relu); }, {2, 3, 4, 4}},
      {"LeakyRelu", [] { return std::make_unique<Activation>(ActivationKind::LeakyRelu, 0.1); }, {2, 3, 4, 4}},
      {"Linear", [] { return std::make_unique<Linear>("fc", 6, 4); }, {3, 6}},
      {"SequentialConvBatchNormLeaky",
       [] {
         auto seq = std::make_unique<Sequential>();
         seq->add<Conv>("c", 2, 2, 3, ConvGeometry{{1, 3, 3}, {1, 1, 1}, {0, 1, 1}, 1}, false);
         seq->add<BatchNorm>("bn", 3);
         seq->add<Activation>(ActivationKind::LeakyRelu, 0.1);
         seq->add<MaxPool>(2, PoolGeometry{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}});
         return seq;
       },
       {2, 2, 4, 4}},
      {"ResNeXtBottleneck", [] { return make_bottleneck("b", 4, 8, 2, {2, 2, 2}); }, {2, 4, 4, 4, 4}},
      {"IdentityShortcutBottleneck", [] { return make_bottleneck("b", 8, 8, 2, {1, 1, 1}); }, {2, 8, 2, 3, 3}},
      {"ChannelAttention", [] { return std::make_unique<ChannelAttention>("alpha"); }, {2, 4, 3, 3}},
  };
}

// Seeded instance of a layer case: Xavier init plus noise, input clear of
// rectifier kinks. Returns infinity errors when no clear input was found.
inline Result check_case(const LayerCase& c, int seed) {
  using namespace tfnet;
  std::mt19937_64 rng(1000 + seed);
  nn::LayerPtr layer = c.make();
  nn::initialize(*layer, 77 + seed);
  for (auto* p : layer->parameters())
    p->value = add(p->value, oracle::random_tensor(p->value.shape(), rng, -0.1, 0.1));
  auto* att = dynamic_cast<ChannelAttention*>(layer.get());
  if (att != nullptr) att->alpha().value[0] = std::uniform_real_distribution<double>(-1, 1)(rng);
  Tensor x = away_from_zero(oracle::random_tensor(c.input, rng));
  auto margin = [&] {
    return kink_margin([&] { layer->forward(x, nn::Mode::Train); }, [&](const auto& fn) { layer->visit(fn); });
  };
  for (int tries = 0; tries < kRedraws && margin() < kMargin; ++tries) x = away_from_zero(oracle::random_tensor(c.input, rng));
  if (margin() < kMargin) return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  return check_layer(*layer, x, static_cast<std::uint64_t>(seed));
}

// Whole fusion block: both input gradients and every parameter.
inline double check_fusion(int seed) {
  using namespace tfnet;
  std::mt19937_64 rng(300 + seed);
  Fusion fusion(FusionConfig{3, 4, 5, 2, 2, 0.1});
  for (auto* p : fusion.parameters()) p->value = oracle::random_tensor(p->value.shape(), rng, -0.5, 0.5);
  Tensor f, t;
  auto margin = [&] {
    return kink_margin([&] { fusion.forward(f, t, nn::Mode::Train); }, [&](const auto& fn) { fusion.visit(fn); });
  };
  int tries = 0;
  do {
    f = oracle::random_tensor({2, 3, 3, 3}, rng);
    t = oracle::random_tensor({2, 4, 3, 3}, rng);
  } while (margin() < kMargin && ++tries < kRedraws);
  if (margin() < kMargin) return std::numeric_limits<double>::infinity();
  const Tensor w = oracle::random_tensor(fusion.output_shape(f.shape(), t.shape()), rng);
  auto objective = [&]() { return dot(fusion.forward(f, t, nn::Mode::Train), w); };
  fusion.zero_grad();
  fusion.forward(f, t, nn::Mode::Train);
  const auto [gf, gt] = fusion.backward(w);
  double worst = std::max(oracle::max_relative_error(gf, oracle::numeric_gradient(objective, f)),
                          oracle::max_relative_error(gt, oracle::numeric_gradient(objective, t)));
  std::vector<Tensor> grads;
  for (auto* p : fusion.parameters()) grads.push_back(p->grad);
  auto params = fusion.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    worst = std::max(worst, oracle::max_relative_error(grads[i], oracle::numeric_gradient(objective, params[i]->value)));
  return worst;
}

// detection_loss on a random 3-class grid with 1-3 GT boxes, objectness
// targets frozen at the unperturbed grid.
inline double check_detection_loss(int seed) {
  using namespace tfnet;
  const auto anchors = default_anchors();
  std::mt19937_64 rng(500 + seed);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t S = 3, C = 3;
  GroundTruthFrame frame;
  for (int b = 0; b < 1 + seed % 3; ++b) {
    const double w = 300 * (0.1 + 0.5 * u(rng)), h = 300 * (0.1 + 0.5 * u(rng));
    const double x = (300 - w) * u(rng), y = (300 - h) * u(rng);
    frame.boxes.push_back({static_cast<std::size_t>(rng() % C), Box{x, y, x + w, y + h}});
  }
  const auto as = assign_targets(frame, 300, 300, anchors, S);
  Tensor g = oracle::random_tensor({GridLayout{C, anchors.size()}.channels(), S, S}, rng, -2, 2);
  const auto targets = objectness_targets(g, as, anchors, C);
  const auto r = detection_loss(g, as, anchors, C, LossWeights{}, targets);
  const Tensor numeric = oracle::numeric_gradient(
      [&]() { return detection_loss(g, as, anchors, C, LossWeights{}, targets).total; }, g);
  return oracle::max_relative_error(r.grad, numeric);
}

}  // namespace gradcheck
