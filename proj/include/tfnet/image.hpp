#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tfnet/tensor.hpp"

namespace tfnet {

// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3, row-major

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t channel) {
    return pixels[(row * width + col) * 3 + channel];
  }
  std::uint8_t at(std::size_t row, std::size_t col, std::size_t channel) const {
    return pixels[(row * width + col) * 3 + channel];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// 8-bit single channel image, used for saliency output.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

// Reads .png (via libpng) or binary .ppm (P6). Throws DataError.
RgbImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

// Bilinear resampling with pixel-center alignment.
RgbImage resize_bilinear(const RgbImage& image, std::size_t height, std::size_t width);

// 3 x H x W tensor with values scaled to [0, 1].
Tensor image_to_tensor(const RgbImage& image);

// Min-max normalizes a H x W map into a gray image (all-zero map -> black).
GrayImage to_gray(const Tensor& map);

}  // namespace tfnet
