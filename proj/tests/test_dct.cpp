#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "tfnet/dct.hpp"
#include "tfnet/error.hpp"

using namespace tfnet;

namespace {

Block random_block(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 255.0);
  Block b;
  for (auto& v : b) v = u(rng);
  return b;
}

RgbImage random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  RgbImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

}  // namespace

TEST(ColorConversion, JfifReferencePixels) {
  RgbImage img(1, 3);
  img.at(0, 1, 0) = img.at(0, 1, 1) = img.at(0, 1, 2) = 255;
  img.at(0, 2, 0) = 255;
  const auto p = rgb_to_ycbcr(img);
  EXPECT_DOUBLE_EQ(p.y.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(p.cb.at(0, 0), 128.0);
  EXPECT_DOUBLE_EQ(p.cr.at(0, 0), 128.0);
  EXPECT_NEAR(p.y.at(0, 1), 255.0, 1e-9);
  EXPECT_NEAR(p.cb.at(0, 1), 128.0, 1e-9);
  EXPECT_NEAR(p.cr.at(0, 1), 128.0, 1e-9);
  EXPECT_NEAR(p.y.at(0, 2), 76.245, 1e-9);
  EXPECT_NEAR(p.cb.at(0, 2), 84.97232, 1e-9);
  EXPECT_DOUBLE_EQ(p.cr.at(0, 2), 255.0);
}

TEST(Padding, RoundsUpWithZeros) {
  const Plane p8(8, 8, 3.0);
  EXPECT_EQ(pad_to_block_multiple(p8).values, p8.values);
  const Plane p9 = pad_to_block_multiple(Plane(9, 8, 1.0));
  EXPECT_EQ(p9.height, 16u);
  for (std::size_t r = 9; r < 16; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(p9.at(r, c), 0.0);
  const Plane p = pad_to_block_multiple(Plane(10, 13));
  EXPECT_EQ(p.height, 16u);
  EXPECT_EQ(p.width, 16u);
}

TEST(BlockDct, ConstantBlocks) {
  Block b;
  b.fill(100.0);
  const Block F = block_dct(b);
  EXPECT_NEAR(F[0], 800.0, 1e-9);
  for (std::size_t i = 1; i < 64; ++i) EXPECT_NEAR(F[i], 0.0, 1e-9);
  b.fill(0.0);
  for (double v : block_dct(b)) EXPECT_EQ(v, 0.0);
  Block dc{};
  dc[0] = 800.0;
  for (double v : inverse_block_dct(dc)) EXPECT_NEAR(v, 100.0, 1e-9);
}

TEST(BlockDct, MatchesQuadrupleLoopAndInverts) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const Block b = random_block(rng);
    const Block F = block_dct(b);
    const auto ref = oracle::dct8x8(b);
    double e2 = 0.0, f2 = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      EXPECT_NEAR(F[i], ref[i], 1e-9);
      e2 += b[i] * b[i];
      f2 += F[i] * F[i];
    }
    EXPECT_NEAR(e2, f2, 1e-6);
    const Block back = inverse_block_dct(F);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(back[i], b[i], 1e-9);
  }
}

TEST(BlockDct, BasisFunctionsMapToUnitVectors) {
  for (std::size_t k = 0; k < 64; ++k) {
    Block e{};
    e[k] = 1.0;
    const Block basis = inverse_block_dct(e);
    const Block F = block_dct(basis);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(F[i], i == k ? 1.0 : 0.0, 1e-12);
  }
}

TEST(ZigZag, MatchesDiagonalWalk) {
  const auto ref = oracle::zigzag();
  const auto& z = zigzag_order();
  for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(z[k], ref[k]) << k;
  EXPECT_EQ(z[0], 0u);
  EXPECT_EQ(z[1], 1u);
  EXPECT_EQ(z[2], 8u);
  EXPECT_EQ(z[63], 63u);
}

TEST(Channels, RegroupingMatchesPerBlockTransform) {
  std::mt19937_64 rng(4);
  const RgbImage img = random_image(16, 16, rng);
  const YcbcrPlanes planes = rgb_to_ycbcr(img);
  const Tensor vol = coefficients_to_channels(planes);
  ASSERT_EQ(vol.shape(), (Shape{192, 2, 2}));
  const auto z = oracle::zigzag();
  const Plane* comps[] = {&planes.y, &planes.cb, &planes.cr};
  for (std::size_t comp = 0; comp < 3; ++comp)
    for (std::size_t br = 0; br < 2; ++br)
      for (std::size_t bc = 0; bc < 2; ++bc) {
        std::array<double, 64> block{};
        for (std::size_t x = 0; x < 8; ++x)
          for (std::size_t y = 0; y < 8; ++y) block[x * 8 + y] = comps[comp]->at(br * 8 + x, bc * 8 + y);
        const auto F = oracle::dct8x8(block);
        for (std::size_t k = 0; k < 64; ++k) EXPECT_NEAR(vol.at({comp * 64 + k, br, bc}), F[z[k]], 1e-9);
      }
}

TEST(Channels, ConstantPlaneAndGrid) {
  RgbImage gray(8, 8, 100);
  const Tensor vol = coefficients_to_channels(rgb_to_ycbcr(gray));
  EXPECT_NEAR(vol.at({0, 0, 0}), 800.0, 1e-9);
  for (std::size_t k = 1; k < 64; ++k) EXPECT_NEAR(vol.at({k, 0, 0}), 0.0, 1e-9);
  const Tensor tall = coefficients_to_channels(rgb_to_ycbcr(RgbImage(16, 8)));
  EXPECT_EQ(tall.shape(), (Shape{192, 2, 1}));
}

TEST(Channels, FullSelectionReconstructsPaddedPlanes) {
  std::mt19937_64 rng(6);
  const RgbImage img = random_image(13, 21, rng);
  const YcbcrPlanes planes = rgb_to_ycbcr(img);
  const FrequencyVolume v = select_channels(coefficients_to_channels(planes), 1.0);
  const YcbcrPlanes back = channels_to_planes(v.data);
  const Plane y = pad_to_block_multiple(planes.y), cr = pad_to_block_multiple(planes.cr);
  ASSERT_EQ(back.y.values.size(), y.values.size());
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    EXPECT_NEAR(back.y.values[i], y.values[i], 1e-6);
    EXPECT_NEAR(back.cr.values[i], cr.values[i], 1e-6);
  }
}

TEST(Lambda, ChannelCountTable) {
  const std::pair<double, std::size_t> table[] = {{0.0, 1}, {0.01, 1}, {0.25, 16}, {0.5, 32}, {0.99, 63}, {1.0, 64}};
  for (auto [lambda, expected] : table) EXPECT_EQ(channels_for_lambda(lambda), expected) << lambda;
  EXPECT_EQ(channels_for_lambda(0.5 / 64), 1u);
  EXPECT_EQ(channels_for_lambda(1.5 / 64), 2u);
  EXPECT_THROW(channels_for_lambda(-0.01), DomainError);
  EXPECT_THROW(channels_for_lambda(1.01), DomainError);
}

TEST(Lambda, MonotoneOnFineGrid) {
  std::size_t prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const std::size_t c = channels_for_lambda(i / 1000.0);
    EXPECT_GE(c, prev);
    EXPECT_GE(c, 1u);
    EXPECT_LE(c, 64u);
    prev = c;
  }
}

TEST(Selection, KeepsLowestChannelsOfEachComponent) {
  std::mt19937_64 rng(7);
  const Tensor vol = coefficients_to_channels(rgb_to_ycbcr(random_image(16, 24, rng)));
  const FrequencyVolume v = select_channels(vol, 0.25);
  EXPECT_EQ(v.per_component_channels, 16u);
  EXPECT_EQ(v.channels(), 48u);
  EXPECT_EQ(v.block_rows(), 2u);
  EXPECT_EQ(v.block_cols(), 3u);
  for (std::size_t comp = 0; comp < 3; ++comp)
    for (std::size_t k = 0; k < 16; ++k)
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(v.data.at({comp * 16 + k, r, c}), vol.at({comp * 64 + k, r, c}));
  EXPECT_EQ(select_channels(vol, 0.0).channels(), 3u);
  EXPECT_THROW(select_channels(vol, 2.0), DomainError);
}

TEST(Dctt, WritesDocumentedLayout) {
  std::mt19937_64 rng(8);
  const FrequencyVolume v = dct_frontend(random_image(16, 16, rng), 0.25);
  const auto path = std::filesystem::temp_directory_path() / "tfnet_test.dctt";
  write_dctt(path, v);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 4 + 16 + 48 * 2 * 2 * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DCTT");
  auto u32 = [&](std::size_t off) {
    return bytes[off] | bytes[off + 1] << 8 | bytes[off + 2] << 16 | static_cast<unsigned>(bytes[off + 3]) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 48u);
  EXPECT_EQ(u32(12), 2u);
  EXPECT_EQ(u32(16), 2u);
  const Tensor back = read_dctt(path);
  EXPECT_EQ(back.shape(), v.data.shape());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(v.data[i])));
  std::filesystem::remove(path);
}
