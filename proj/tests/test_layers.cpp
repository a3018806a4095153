#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tfnet/backbones.hpp"
#include "tfnet/error.hpp"
#include "tfnet/layers.hpp"

using namespace tfnet;
using namespace tfnet::nn;

class GradientCheck : public ::testing::TestWithParam<gradcheck::LayerCase> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  for (int s = 0; s < 20; ++s) {
    const auto r = gradcheck::check_case(GetParam(), s);
    EXPECT_LT(r.input, 1e-4) << "seed " << s;
    EXPECT_LT(r.params, 1e-4) << "seed " << s;
  }
}

INSTANTIATE_TEST_SUITE_P(LayerKinds, GradientCheck, ::testing::ValuesIn(gradcheck::layer_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(GuidedRule, RectifierCases) {
  EXPECT_EQ(guided_gradient(-1.0, 5.0), 0.0);
  EXPECT_EQ(guided_gradient(2.0, -5.0), 0.0);
  EXPECT_EQ(guided_gradient(2.0, 5.0), 5.0);
  EXPECT_EQ(guided_gradient(0.0, 5.0), 0.0);
}

TEST(GuidedRule, ActivationLayerInGuidedMode) {
  Activation relu(ActivationKind::Relu);
  relu.set_guided(true);
  const Tensor x({1, 4}, std::vector<double>{-1.0, 2.0, 2.0, 3.0});
  relu.forward(x, Mode::Eval);
  const Tensor g = relu.backward(Tensor({1, 4}, std::vector<double>{5.0, -5.0, 5.0, 0.5}));
  EXPECT_EQ(g.values(), (std::vector<double>{0.0, 0.0, 5.0, 0.5}));
  EXPECT_EQ(relu.last_input_gradient(), g);
}

TEST(Functional, Conv2dMatchesDirectSum) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({2, 5, 5}, rng), w = oracle::random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({3}, rng);
  const Tensor y = conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3}));
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t v = 0; v < 3; ++v) {
              const long r = long(i * 2 + u) - 1, q = long(j * 2 + v) - 1;
              if (r < 0 || q < 0 || r >= 5 || q >= 5) continue;
              s += w.at({o, c, u, v}) * x.at({c, std::size_t(r), std::size_t(q)});
            }
        EXPECT_NEAR(y.at({o, i, j}), s, 1e-12);
      }
}

TEST(Functional, GroupedConvSplitsChannels) {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({4, 4, 4}, rng), w = oracle::random_tensor({2, 2, 1, 1}, rng);
  const Tensor y = grouped_conv(x, w, Tensor(), 2);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 4}));
  for (std::size_t p = 0; p < 16; ++p) {
    EXPECT_NEAR(y[p], w[0] * x[p] + w[1] * x[16 + p], 1e-12);
    EXPECT_NEAR(y[16 + p], w[2] * x[32 + p] + w[3] * x[48 + p], 1e-12);
  }
  EXPECT_THROW(grouped_conv(x, Tensor({2, 3, 1, 1}), Tensor(), 2), ShapeError);
}

TEST(Functional, PoolingForms) {
  const Tensor x({1, 2, 2}, std::vector<double>{1, 4, 3, 2});
  EXPECT_EQ(maxpool(x, 2, 2).values(), std::vector<double>{4});
  const Tensor v({1, 2, 1, 1}, std::vector<double>{1, 3});
  EXPECT_EQ(temporal_avg_pool(v).values(), std::vector<double>{2});
}

TEST(Initialization, XavierIsSeededAndScaled) {
  const Tensor a = xavier_init({64, 32, 3, 3}, 32 * 9, 64 * 9, 5);
  EXPECT_EQ(a, xavier_init({64, 32, 3, 3}, 32 * 9, 64 * 9, 5));
  EXPECT_NE(a, xavier_init({64, 32, 3, 3}, 32 * 9, 64 * 9, 6));
  double m = 0, s = 0;
  for (double v : a.values()) m += v;
  m /= a.size();
  for (double v : a.values()) s += (v - m) * (v - m);
  s /= a.size();
  EXPECT_NEAR(s, 2.0 / (32 * 9 + 64 * 9), 0.1 * 2.0 / (32 * 9 + 64 * 9));
}

TEST(BatchNormLayer, EvalUsesRunningStatistics) {
  BatchNorm bn("bn", 1, {1e-5, 1.0});
  const Tensor x({4, 1}, std::vector<double>{1, 2, 3, 4});
  bn.forward(x, Mode::Train);
  EXPECT_NEAR(bn.running_mean().value[0], 2.5, 1e-12);
  EXPECT_NEAR(bn.running_var().value[0], 1.25, 1e-12);
  const Tensor y = bn.forward(Tensor({1, 1}, std::vector<double>{2.5}), Mode::Eval);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
}

TEST(LayerShapes, MismatchedGradientIsRejected) {
  Conv c("c", 2, 1, 1, ConvGeometry{});
  EXPECT_THROW(nn::backward(c, Tensor({1, 1, 3, 3}), Tensor({1, 1, 2, 2})), ShapeError);
  EXPECT_THROW(c.forward(Tensor({1, 2, 3, 3}), Mode::Train), ShapeError);
}
