#include "tfnet/dct.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

// basis[u][x] = alpha(u) * cos((2x + 1) u pi / 16)
const std::array<std::array<double, kBlockSize>, kBlockSize>& dct_basis() {
  static const auto table = [] {
    std::array<std::array<double, kBlockSize>, kBlockSize> t{};
    const double n = static_cast<double>(kBlockSize);
    for (std::size_t u = 0; u < kBlockSize; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (std::size_t x = 0; x < kBlockSize; ++x) {
        t[u][x] = alpha * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / (2.0 * n));
      }
    }
    return t;
  }();
  return table;
}

double clamp_byte(double v) { return std::clamp(v, 0.0, 255.0); }

Plane& component(YcbcrPlanes& p, std::size_t c) { return c == 0 ? p.y : (c == 1 ? p.cb : p.cr); }

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("DCTT: truncated file");
  return value;
}

}  // namespace

YcbcrPlanes rgb_to_ycbcr(const RgbImage& image) {
  YcbcrPlanes p{Plane(image.height, image.width), Plane(image.height, image.width),
                Plane(image.height, image.width)};
  for (std::size_t i = 0; i < image.height * image.width; ++i) {
    const double r = image.pixels[3 * i], g = image.pixels[3 * i + 1], b = image.pixels[3 * i + 2];
    p.y.values[i] = clamp_byte(0.299 * r + 0.587 * g + 0.114 * b);
    p.cb.values[i] = clamp_byte(-0.168736 * r - 0.331264 * g + 0.5 * b + 128.0);
    p.cr.values[i] = clamp_byte(0.5 * r - 0.418688 * g - 0.081312 * b + 128.0);
  }
  return p;
}

Plane pad_to_block_multiple(const Plane& plane) {
  const std::size_t h = (plane.height + kBlockSize - 1) / kBlockSize * kBlockSize;
  const std::size_t w = (plane.width + kBlockSize - 1) / kBlockSize * kBlockSize;
  if (h == plane.height && w == plane.width) return plane;
  Plane out(h, w);
  for (std::size_t r = 0; r < plane.height; ++r)
    std::copy_n(plane.values.begin() + r * plane.width, plane.width, out.values.begin() + r * w);
  return out;
}

Block block_dct(const Block& block) {
  const auto& c = dct_basis();
  // Rows first: tmp(x, v) = sum_y f(x, y) c[v][y]; then columns.
  Block tmp{};
  for (std::size_t x = 0; x < kBlockSize; ++x)
    for (std::size_t v = 0; v < kBlockSize; ++v) {
      double s = 0.0;
      for (std::size_t y = 0; y < kBlockSize; ++y) s += block[x * kBlockSize + y] * c[v][y];
      tmp[x * kBlockSize + v] = s;
    }
  Block out{};
  for (std::size_t u = 0; u < kBlockSize; ++u)
    for (std::size_t v = 0; v < kBlockSize; ++v) {
      double s = 0.0;
      for (std::size_t x = 0; x < kBlockSize; ++x) s += c[u][x] * tmp[x * kBlockSize + v];
      out[u * kBlockSize + v] = s;
    }
  return out;
}

Block inverse_block_dct(const Block& coeffs) {
  const auto& c = dct_basis();
  Block tmp{};
  for (std::size_t u = 0; u < kBlockSize; ++u)
    for (std::size_t y = 0; y < kBlockSize; ++y) {
      double s = 0.0;
      for (std::size_t v = 0; v < kBlockSize; ++v) s += coeffs[u * kBlockSize + v] * c[v][y];
      tmp[u * kBlockSize + y] = s;
    }
  Block out{};
  for (std::size_t x = 0; x < kBlockSize; ++x)
    for (std::size_t y = 0; y < kBlockSize; ++y) {
      double s = 0.0;
      for (std::size_t u = 0; u < kBlockSize; ++u) s += c[u][x] * tmp[u * kBlockSize + y];
      out[x * kBlockSize + y] = s;
    }
  return out;
}

const std::array<std::size_t, kBlockCoefficients>& zigzag_order() {
  static const auto order = [] {
    std::array<std::size_t, kBlockCoefficients> z{};
    std::size_t k = 0;
    for (std::size_t diag = 0; diag < 2 * kBlockSize - 1; ++diag) {
      // Even diagonals run bottom-left to top-right, odd ones the other way.
      const std::size_t lo = diag < kBlockSize ? 0 : diag - kBlockSize + 1;
      const std::size_t hi = diag < kBlockSize ? diag : kBlockSize - 1;
      for (std::size_t i = lo; i <= hi; ++i) {
        const std::size_t row = diag % 2 == 0 ? diag - i : i;
        z[k++] = row * kBlockSize + (diag - row);
      }
    }
    return z;
  }();
  return order;
}

Tensor coefficients_to_channels(const YcbcrPlanes& planes) {
  const Plane py = pad_to_block_multiple(planes.y);
  const Plane pcb = pad_to_block_multiple(planes.cb);
  const Plane pcr = pad_to_block_multiple(planes.cr);
  if (pcb.height != py.height || pcr.height != py.height || pcb.width != py.width ||
      pcr.width != py.width) {
    throw ShapeError("colour planes differ in size");
  }
  const std::size_t rows = py.height / kBlockSize, cols = py.width / kBlockSize;
  Tensor out({3 * kBlockCoefficients, rows, cols});
  const auto& zz = zigzag_order();
  const Plane* comps[3] = {&py, &pcb, &pcr};

  // Blocks are independent; each writes its own grid cell in every channel.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t br = 0; br < static_cast<std::ptrdiff_t>(rows); ++br) {
    for (std::size_t comp = 0; comp < 3; ++comp) {
      const Plane& p = *comps[comp];
      for (std::size_t bc = 0; bc < cols; ++bc) {
        Block blk{};
        for (std::size_t x = 0; x < kBlockSize; ++x)
          for (std::size_t y = 0; y < kBlockSize; ++y)
            blk[x * kBlockSize + y] = p.at(br * kBlockSize + x, bc * kBlockSize + y);
        const Block coeffs = block_dct(blk);
        for (std::size_t k = 0; k < kBlockCoefficients; ++k) {
          out[((comp * kBlockCoefficients + k) * rows + br) * cols + bc] = coeffs[zz[k]];
        }
      }
    }
  }
  return out;
}

YcbcrPlanes channels_to_planes(const Tensor& volume) {
  if (volume.rank() != 3 || volume.dim(0) != 3 * kBlockCoefficients) {
    throw ShapeError("channels_to_planes expects 192 x h x w, got " + shape_string(volume.shape()));
  }
  const std::size_t rows = volume.dim(1), cols = volume.dim(2);
  YcbcrPlanes out;
  const auto& zz = zigzag_order();
  for (std::size_t comp = 0; comp < 3; ++comp) {
    Plane& p = component(out, comp);
    p = Plane(rows * kBlockSize, cols * kBlockSize);
    for (std::size_t br = 0; br < rows; ++br)
      for (std::size_t bc = 0; bc < cols; ++bc) {
        Block coeffs{};
        for (std::size_t k = 0; k < kBlockCoefficients; ++k) {
          coeffs[zz[k]] = volume[((comp * kBlockCoefficients + k) * rows + br) * cols + bc];
        }
        const Block blk = inverse_block_dct(coeffs);
        for (std::size_t x = 0; x < kBlockSize; ++x)
          for (std::size_t y = 0; y < kBlockSize; ++y)
            p.at(br * kBlockSize + x, bc * kBlockSize + y) = blk[x * kBlockSize + y];
      }
  }
  return out;
}

std::size_t channels_for_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  const double scaled = std::round(lambda * static_cast<double>(kBlockCoefficients));
  return std::max<std::size_t>(static_cast<std::size_t>(scaled), 1);
}

FrequencyVolume keep_channels(const Tensor& volume, std::size_t per_component) {
  if (volume.rank() != 3 || volume.dim(0) != 3 * kBlockCoefficients) {
    throw ShapeError("channel selection expects 192 x h x w, got " + shape_string(volume.shape()));
  }
  if (per_component < 1 || per_component > kBlockCoefficients) {
    throw DomainError("per-component channel count " + std::to_string(per_component) + " outside [1, 64]");
  }
  const std::size_t plane = volume.dim(1) * volume.dim(2);
  Tensor data({3 * per_component, volume.dim(1), volume.dim(2)});
  for (std::size_t comp = 0; comp < 3; ++comp) {
    std::copy_n(volume.values().begin() + comp * kBlockCoefficients * plane, per_component * plane,
                data.data().begin() + comp * per_component * plane);
  }
  return FrequencyVolume{per_component, std::move(data)};
}

FrequencyVolume select_channels(const Tensor& volume, double lambda) {
  return keep_channels(volume, channels_for_lambda(lambda));
}

FrequencyVolume dct_frontend(const RgbImage& keyframe, double lambda) {
  return select_channels(coefficients_to_channels(rgb_to_ycbcr(keyframe)), lambda);
}

FrequencyVolume dct_frontend_channels(const RgbImage& keyframe, std::size_t per_component) {
  return keep_channels(coefficients_to_channels(rgb_to_ycbcr(keyframe)), per_component);
}

void write_dctt(const std::filesystem::path& path, const FrequencyVolume& volume) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string());
  out.write("DCTT", 4);
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.channels()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.block_rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.block_cols()));
  for (double v : volume.data.values()) put_le<float>(out, static_cast<float>(v));
  if (!out) throw DataError("failed writing " + path.string());
}

Tensor read_dctt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DCTT", 4) != 0) throw DataError("DCTT: bad magic in " + path.string());
  const auto version = get_le<std::uint32_t>(in);
  if (version != 1) throw DataError("DCTT: unsupported version " + std::to_string(version));
  const auto c = get_le<std::uint32_t>(in);
  const auto h = get_le<std::uint32_t>(in);
  const auto w = get_le<std::uint32_t>(in);
  Tensor t({c, h, w});
  for (auto& v : t.data()) v = get_le<float>(in);
  return t;
}

}  // namespace tfnet
