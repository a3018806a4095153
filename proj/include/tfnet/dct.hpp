#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "tfnet/image.hpp"
#include "tfnet/tensor.hpp"

namespace tfnet {

inline constexpr std::size_t kBlockSize = 8;
inline constexpr std::size_t kBlockCoefficients = kBlockSize * kBlockSize;

// Single image plane of doubles, row-major.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

struct YcbcrPlanes {
  Plane y, cb, cr;
};

// 8x8 block, row-major: element (x, y) sits at x * 8 + y, x indexing rows.
using Block = std::array<double, kBlockCoefficients>;

// Full-range JFIF conversion, clamped to [0, 255].
YcbcrPlanes rgb_to_ycbcr(const RgbImage& image);

// Zero-pads bottom and right up to the next multiple of 8.
Plane pad_to_block_multiple(const Plane& plane);

// Orthonormal 2-D DCT-II of an 8x8 block and its inverse.
Block block_dct(const Block& block);
Block inverse_block_dct(const Block& coeffs);

// zigzag_order()[k] is the raster index u * 8 + v of the k-th coefficient in
// JPEG scan order (DC first).
const std::array<std::size_t, kBlockCoefficients>& zigzag_order();

// Regroups per-block coefficients into 192 frequency channels laid out on the
// block grid: Y channels 0..63, Cb 64..127, Cr 128..191, each in zig-zag order.
// Planes are padded to a multiple of 8 first.
Tensor coefficients_to_channels(const YcbcrPlanes& planes);

// Inverse of coefficients_to_channels for a full 192-channel volume; returns
// the padded planes.
YcbcrPlanes channels_to_planes(const Tensor& volume);

// max(round(lambda * 64), 1), rounding half away from zero.
std::size_t channels_for_lambda(double lambda);

struct FrequencyVolume {
  std::size_t per_component_channels = 0;  // C_input
  Tensor data;                             // (3 * C_input) x blockRows x blockCols

  std::size_t channels() const { return data.dim(0); }
  std::size_t block_rows() const { return data.dim(1); }
  std::size_t block_cols() const { return data.dim(2); }
};

// Keeps the lowest C_input zig-zag channels of each colour component of a
// 192 x h x w volume. Throws DomainError for lambda outside [0, 1].
FrequencyVolume select_channels(const Tensor& volume, double lambda);
// Same with an explicit per-component count in [1, 64].
FrequencyVolume keep_channels(const Tensor& volume, std::size_t per_component);

// Whole frontend: colour conversion, padding, block DCT, regrouping, selection.
FrequencyVolume dct_frontend(const RgbImage& keyframe, double lambda);
FrequencyVolume dct_frontend_channels(const RgbImage& keyframe, std::size_t per_component);

// "DCTT" export: magic, u32 {version=1, C_f, blockRows, blockCols}, then f32
// coefficients channel-first, everything little-endian.
void write_dctt(const std::filesystem::path& path, const FrequencyVolume& volume);
Tensor read_dctt(const std::filesystem::path& path);

}  // namespace tfnet
