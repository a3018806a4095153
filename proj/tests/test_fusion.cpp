#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tfnet/error.hpp"
#include "tfnet/fusion.hpp"

using namespace tfnet;

TEST(ChannelAttentionMath, ZeroAlphaIsExactIdentity) {
  std::mt19937_64 rng(1);
  const Tensor f = oracle::random_tensor({5, 3, 4}, rng);
  EXPECT_EQ(channel_attention(f, 0.0), f);
}

TEST(ChannelAttentionMath, AttentionRowsSumToOne) {
  std::mt19937_64 rng(2);
  const auto t = channel_attention_trace(oracle::random_tensor({6, 4, 4}, rng, -3, 3), 0.7);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += t.attention.at({i, j});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ChannelAttentionMath, IdenticalRowsScaleByOnePlusAlpha) {
  std::mt19937_64 rng(3);
  const Tensor row = oracle::random_tensor({1, 3, 3}, rng);
  Tensor f({4, 3, 3});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 9; ++p) f[c * 9 + p] = row[p];
  const double alpha = 0.35;
  const Tensor out = channel_attention(f, alpha);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], (1 + alpha) * f[i], 1e-12);
}

TEST(ChannelAttentionMath, MatchesExplicitFormula) {
  std::mt19937_64 rng(4);
  const Tensor f = oracle::random_tensor({3, 2, 2}, rng);
  const double alpha = -0.4;
  const Tensor out = channel_attention(f, alpha);
  // G_ij = <F_i, F_j>, M = softmax rows, F' = M F
  for (std::size_t i = 0; i < 3; ++i) {
    double g[3], z = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      g[j] = 0;
      for (std::size_t p = 0; p < 4; ++p) g[j] += f[i * 4 + p] * f[j * 4 + p];
    }
    for (double v : g) z += std::exp(v);
    for (std::size_t p = 0; p < 4; ++p) {
      double att = 0;
      for (std::size_t j = 0; j < 3; ++j) att += std::exp(g[j]) / z * f[j * 4 + p];
      EXPECT_NEAR(out[i * 4 + p], alpha * att + f[i * 4 + p], 1e-12);
    }
  }
}

TEST(FusionGradient, BlockMatchesCentralDifferences) {
  for (int s = 0; s < 20; ++s) EXPECT_LT(gradcheck::check_fusion(s), 1e-4) << "seed " << s;
}

TEST(FusionShapes, HeadChannelFormula) {
  EXPECT_EQ(head_channels(1), 30u);
  EXPECT_EQ(head_channels(21), 130u);
  EXPECT_EQ(head_channels(24), 145u);
}

TEST(FusionShapes, TimeOnlyAndMismatches) {
  Fusion time_only(FusionConfig{0, 4, 0, 3, 5, 0.1});
  EXPECT_FALSE(time_only.uses_frequency());
  EXPECT_EQ(time_only.output_shape({}, {1, 4, 2, 2}), (Shape{1, 40, 2, 2}));
  Fusion both(FusionConfig{3, 4, 0, 3, 5, 0.1});
  EXPECT_THROW(both.output_shape({1, 3, 3, 3}, {1, 4, 2, 2}), ShapeError);
  EXPECT_THROW(both.output_shape({1, 2, 2, 2}, {1, 4, 2, 2}), ShapeError);
}

TEST(FusionInit, AlphasStartAtZero) {
  Fusion f(FusionConfig{3, 4, 0, 1, 5, 0.1});
  EXPECT_EQ(f.frequency_attention().alpha().value[0], 0.0);
  EXPECT_EQ(f.time_attention().alpha().value[0], 0.0);
}
