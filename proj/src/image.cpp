#include "tfnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void png_warn(png_structp, png_const_charp) {}

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw DataError("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  RgbImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) throw DataError("png: cannot decode " + path.string());
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img = RgbImage(height, width);
  rows.resize(height);
  for (std::size_t r = 0; r < height; ++r) rows[r] = img.pixels.data() + r * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return img;
}

void write_png_raw(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   int color_type, std::size_t channels, const std::uint8_t* data) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw DataError("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  if (setjmp(png_jmpbuf(png))) throw DataError("png: cannot encode " + path.string());
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(data + r * width * channels));
  }
  png_write_end(png, nullptr);
}

// Skips whitespace and '#' comments in a netpbm header.
std::size_t read_header_number(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(in >> v)) throw DataError("ppm: malformed header");
  return v;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") throw DataError("ppm: " + path.string() + " is not binary P6");
  const std::size_t w = read_header_number(in);
  const std::size_t h = read_header_number(in);
  const std::size_t maxval = read_header_number(in);
  if (maxval != 255) throw DataError("ppm: only maxval 255 is supported");
  in.get();
  RgbImage img(h, w);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw DataError("ppm: truncated pixel data in " + path.string());
  return img;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  throw DataError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png_raw(path, image.height, image.width, PNG_COLOR_TYPE_RGB, 3, image.pixels.data());
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_png_raw(path, image.height, image.width, PNG_COLOR_TYPE_GRAY, 1, image.pixels.data());
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

RgbImage resize_bilinear(const RgbImage& image, std::size_t height, std::size_t width) {
  if (image.height == height && image.width == width) return image;
  if (image.height == 0 || image.width == 0) throw DataError("cannot resize an empty image");
  RgbImage out(height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (std::size_t r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (std::size_t c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = image.at(y0, x0, ch) * (1 - wx) + image.at(y0, x1, ch) * wx;
        const double bot = image.at(y1, x0, ch) * (1 - wx) + image.at(y1, x1, ch) * wx;
        out.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return out;
}

Tensor image_to_tensor(const RgbImage& image) {
  Tensor t({3, image.height, image.width});
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t ch = 0; ch < 3; ++ch) t[ch * plane + i] = image.pixels[i * 3 + ch] / 255.0;
  return t;
}

GrayImage to_gray(const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("to_gray expects H x W, got " + shape_string(map.shape()));
  GrayImage g{map.dim(0), map.dim(1), std::vector<std::uint8_t>(map.size(), 0)};
  if (map.empty()) return g;
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  const double range = *hi - *lo;
  if (range <= 0) return g;
  for (std::size_t i = 0; i < map.size(); ++i) {
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (map[i] - *lo) / range));
  }
  return g;
}

}  // namespace tfnet
