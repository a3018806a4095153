#include "tfnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(unit(rng) * static_cast<double>(hi - lo + 1));
}

long parse_integer(const std::string& tok, std::size_t line) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || tok.empty()) {
    throw DataError("non-integer field '" + tok + "' at line " + std::to_string(line));
  }
  return v;
}

bool is_frame_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return p.filename().string().rfind("frame_", 0) == 0 && (ext == ".png" || ext == ".ppm");
}

RgbImage crop(const RgbImage& image, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  RgbImage out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    std::copy_n(image.pixels.begin() + ((y0 + r) * image.width + x0) * 3, w * 3,
                out.pixels.begin() + r * w * 3);
  return out;
}

RgbImage flip_image(const RgbImage& image) {
  RgbImage out(image.height, image.width);
  for (std::size_t r = 0; r < image.height; ++r)
    for (std::size_t c = 0; c < image.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, image.width - 1 - c, ch) = image.at(r, c, ch);
  return out;
}

struct PixelWindow {
  std::size_t x, y, w, h;
};

PixelWindow pixel_window(const AugmentParams& p, std::size_t width, std::size_t height) {
  const auto side = [&](double extent) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(p.crop_scale * extent)));
  };
  PixelWindow win{0, 0, side(static_cast<double>(width)), side(static_cast<double>(height))};
  win.w = std::min(win.w, width);
  win.h = std::min(win.h, height);
  win.x = std::min(static_cast<std::size_t>(std::lround(p.crop_x * width)), width - win.w);
  win.y = std::min(static_cast<std::size_t>(std::lround(p.crop_y * height)), height - win.h);
  return win;
}

RgbImage geometric(const RgbImage& image, const AugmentParams& p, bool crop_on) {
  RgbImage out = image;
  if (crop_on) {
    const auto win = pixel_window(p, image.width, image.height);
    if (win.w != image.width || win.h != image.height) {
      out = resize_bilinear(crop(image, win.x, win.y, win.w, win.h), image.height, image.width);
    }
  }
  if (p.flip) out = flip_image(out);
  return out;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Brightness scale, contrast about the mean luma, saturation about per-pixel luma.
RgbImage jitter(const RgbImage& image, const AugmentParams& p) {
  const std::size_t n = image.height * image.width;
  auto luma = [&](std::size_t i) {
    return 0.299 * image.pixels[i * 3] + 0.587 * image.pixels[i * 3 + 1] + 0.114 * image.pixels[i * 3 + 2];
  };
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += luma(i);
  mean = n ? mean / static_cast<double>(n) : 0.0;
  RgbImage out(image.height, image.width);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = luma(i);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double v = image.pixels[i * 3 + ch];
      v = y + p.saturation * (v - y);
      v = mean + p.contrast * (v - mean);
      out.pixels[i * 3 + ch] = to_byte(v * p.brightness);
    }
  }
  return out;
}

std::size_t keyframe_position(std::size_t depth, KeyframeChoice choice) {
  switch (choice) {
    case KeyframeChoice::First: return 0;
    case KeyframeChoice::Middle: return depth / 2;
    case KeyframeChoice::Last: break;
  }
  return depth - 1;
}

ClipSample load_frames(const std::vector<fs::path>& frames, const std::vector<GroundTruthFrame>* labels,
                       std::size_t start, std::size_t stride, const ClipOptions& options,
                       const std::string& what) {
  if (frames.empty()) throw DataError("video " + what + " has no frames");
  if (stride == 0 || options.depth == 0) throw ConfigError("clip stride and depth must be positive");
  ClipSample clip;
  clip.stride = stride;
  clip.indices = clip_indices(frames.size(), start, stride, options.depth);
  const std::size_t key_pos = keyframe_position(options.depth, options.keyframe);
  RgbImage source_key;
  for (std::size_t k = 0; k < clip.indices.size(); ++k) {
    RgbImage img = read_image(frames[clip.indices[k]]);
    if (k == key_pos) source_key = img;
    clip.frames.push_back(resize_bilinear(img, options.frame_size, options.frame_size));
  }
  clip.keyframe = resize_bilinear(source_key, options.keyframe_size, options.keyframe_size);
  clip.source_width = source_key.width;
  clip.source_height = source_key.height;
  const std::size_t key_index = clip.indices[key_pos];
  clip.gt.frame_id = key_index;
  if (labels != nullptr) {
    const double sx = static_cast<double>(options.keyframe_size) / static_cast<double>(source_key.width);
    const double sy = static_cast<double>(options.keyframe_size) / static_cast<double>(source_key.height);
    for (const auto& f : *labels) {
      if (f.frame_id != key_index) continue;
      for (const auto& g : f.boxes) {
        const Box b{std::clamp(g.box.x1, 0.0, double(source_key.width)) * sx,
                    std::clamp(g.box.y1, 0.0, double(source_key.height)) * sy,
                    std::clamp(g.box.x2, 0.0, double(source_key.width)) * sx,
                    std::clamp(g.box.y2, 0.0, double(source_key.height)) * sy};
        if (b.x2 > b.x1 && b.y2 > b.y1) clip.gt.boxes.push_back({g.class_id, b});
      }
    }
  }
  return clip;
}

std::string class_name_for(std::size_t c) {
  static const char* base[] = {"horizontal_drift", "vertical_drift", "oscillation"};
  std::string name = base[c % 3];
  if (c >= 3) name += "_x" + std::to_string(c / 3 + 1);
  return name;
}

}  // namespace

std::vector<std::string> read_class_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open class list " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) throw DataError("empty class name at line " + std::to_string(names.size() + 1) + " of " + path.string());
    names.push_back(line);
  }
  if (names.empty()) throw DataError("class list " + path.string() + " is empty");
  return names;
}

std::vector<GroundTruthFrame> parse_annotations(std::istream& in, std::size_t num_classes) {
  std::vector<GroundTruthFrame> frames;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 6) throw DataError("expected 6 fields at line " + std::to_string(n));
    long v[6];
    for (int i = 0; i < 6; ++i) v[i] = parse_integer(tok[i], n);
    const auto at = " at line " + std::to_string(n);
    if (v[0] < 0) throw DataError("negative frame index" + at);
    if (v[1] < 0 || static_cast<std::size_t>(v[1]) >= num_classes) {
      throw DataError("class id " + std::to_string(v[1]) + " out of range" + at);
    }
    if (v[2] >= v[4]) throw DataError("x1 ≥ x2" + at);
    if (v[3] >= v[5]) throw DataError("y1 ≥ y2" + at);
    const auto frame_id = static_cast<std::size_t>(v[0]);
    auto it = std::find_if(frames.begin(), frames.end(), [&](const GroundTruthFrame& f) { return f.frame_id == frame_id; });
    if (it == frames.end()) {
      frames.push_back({frame_id, {}});
      it = frames.end() - 1;
    }
    it->boxes.push_back({static_cast<std::size_t>(v[1]),
                         Box{double(v[2]), double(v[3]), double(v[4]), double(v[5])}});
  }
  return frames;
}

std::vector<GroundTruthFrame> parse_annotations(const fs::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations " + path.string());
  try {
    return parse_annotations(in, num_classes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<fs::path> list_frames(const fs::path& video_dir) {
  std::vector<fs::path> frames;
  if (!fs::is_directory(video_dir)) throw DataError("not a directory: " + video_dir.string());
  for (const auto& e : fs::directory_iterator(video_dir))
    if (e.is_regular_file() && is_frame_file(e.path())) frames.push_back(e.path());
  std::sort(frames.begin(), frames.end());
  return frames;
}

DatasetIndex build_index(const fs::path& root, const std::string& split) {
  DatasetIndex index;
  index.root = root;
  index.split = split;
  index.class_names = read_class_list(root / "classes.txt");
  const fs::path split_dir = root / split;
  if (!fs::is_directory(split_dir)) throw DataError("missing split directory " + split_dir.string());
  for (std::size_t c = 0; c < index.class_names.size(); ++c) {
    const fs::path class_dir = split_dir / index.class_names[c];
    if (!fs::is_directory(class_dir)) continue;
    std::vector<fs::path> videos;
    for (const auto& e : fs::directory_iterator(class_dir))
      if (e.is_directory()) videos.push_back(e.path());
    std::sort(videos.begin(), videos.end());
    for (const auto& dir : videos) {
      VideoRecord rec;
      rec.video_id = dir.filename().string();
      rec.directory = dir;
      rec.frames = list_frames(dir);
      if (rec.frames.empty()) throw DataError("video " + dir.string() + " has no frames");
      rec.label_path = split_dir / "labels" / (rec.video_id + ".txt");
      if (!fs::exists(rec.label_path)) throw DataError("missing labels " + rec.label_path.string());
      rec.class_id = c;
      rec.labels = parse_annotations(rec.label_path, index.class_names.size());
      index.videos.push_back(std::move(rec));
    }
  }
  if (index.videos.empty()) throw DataError("no videos under " + split_dir.string());
  return index;
}

std::size_t frame_uid(const DatasetIndex& index, std::size_t video, std::size_t frame) {
  if (video >= index.videos.size()) throw DataError("video position out of range");
  std::size_t offset = 0;
  for (std::size_t v = 0; v < video; ++v) offset += index.videos[v].frame_count();
  return offset + frame;
}

std::vector<GroundTruthFrame> all_ground_truth(const DatasetIndex& index) {
  std::vector<GroundTruthFrame> out;
  std::size_t offset = 0;
  for (const auto& v : index.videos) {
    for (const auto& f : v.labels) out.push_back({offset + f.frame_id, f.boxes});
    offset += v.frame_count();
  }
  return out;
}

std::vector<std::size_t> clip_indices(std::size_t frame_count, std::size_t start, std::size_t stride,
                                      std::size_t depth) {
  if (frame_count == 0) throw DataError("empty video");
  std::vector<std::size_t> idx(depth);
  for (std::size_t k = 0; k < depth; ++k) idx[k] = std::min(start + k * stride, frame_count - 1);
  return idx;
}

ClipSample load_clip(const VideoRecord& video, std::size_t start, std::size_t stride, const ClipOptions& options) {
  return load_frames(video.frames, &video.labels, start, stride, options, video.video_id);
}

ClipSample load_clip(const fs::path& video_dir, std::size_t start, std::size_t stride, const ClipOptions& options) {
  return load_frames(list_frames(video_dir), nullptr, start, stride, options, video_dir.string());
}

Box flip_box(const Box& box, double image_width) {
  return {image_width - box.x2, box.y1, image_width - box.x1, box.y2};
}

Box crop_rescale_box(const Box& box, const CropWindow& window, double sx, double sy) {
  return {(box.x1 - window.x) * sx, (box.y1 - window.y) * sy, (box.x2 - window.x) * sx, (box.y2 - window.y) * sy};
}

AugmentParams sample_augmentation(const AugmentOptions& options, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentParams p;
  // Every value is drawn even for disabled knobs.
  const bool flip = unit(rng) < 0.5;
  const double scale = uniform(rng, options.min_crop_scale, 1.0);
  const double cx = unit(rng), cy = unit(rng);
  const double s = options.jitter_strength;
  const double b = uniform(rng, 1 - s, 1 + s), c = uniform(rng, 1 - s, 1 + s), sat = uniform(rng, 1 - s, 1 + s);
  if (options.flip) p.flip = flip;
  if (options.crop) {
    p.crop_scale = scale;
    p.crop_x = cx * (1 - scale);
    p.crop_y = cy * (1 - scale);
  }
  if (options.jitter) {
    p.brightness = b;
    p.contrast = c;
    p.saturation = sat;
  }
  return p;
}

ClipSample apply_augmentation(const ClipSample& clip, const AugmentParams& params, const AugmentOptions& options) {
  ClipSample out;
  out.stride = clip.stride;
  out.indices = clip.indices;
  out.source_width = clip.source_width;
  out.source_height = clip.source_height;
  const bool colour = params.brightness != 1 || params.contrast != 1 || params.saturation != 1;
  auto transform = [&](const RgbImage& img) {
    RgbImage g = geometric(img, params, true);
    return colour ? jitter(g, params) : g;
  };
  for (const auto& f : clip.frames) out.frames.push_back(transform(f));
  out.keyframe = transform(clip.keyframe);

  const double W = static_cast<double>(clip.keyframe.width), H = static_cast<double>(clip.keyframe.height);
  const auto win = pixel_window(params, clip.keyframe.width, clip.keyframe.height);
  const CropWindow cw{double(win.x), double(win.y), double(win.w), double(win.h)};
  out.gt.frame_id = clip.gt.frame_id;
  for (const auto& g : clip.gt.boxes) {
    const Box mapped = crop_rescale_box(g.box, cw, W / cw.width, H / cw.height);
    Box clipped{std::clamp(mapped.x1, 0.0, W), std::clamp(mapped.y1, 0.0, H), std::clamp(mapped.x2, 0.0, W),
                std::clamp(mapped.y2, 0.0, H)};
    if (clipped.area() <= 0.0 || clipped.area() < options.min_box_fraction * mapped.area()) continue;
    if (params.flip) clipped = flip_box(clipped, W);
    out.gt.boxes.push_back({g.class_id, clipped});
  }
  return out;
}

ClipSample augment(const ClipSample& clip, const AugmentOptions& options, std::uint64_t seed) {
  return apply_augmentation(clip, sample_augmentation(options, seed), options);
}

MotionPattern pattern_for_class(std::size_t class_id) {
  return static_cast<MotionPattern>(class_id % 3);
}

void synth_dataset(const SynthSpec& spec, std::uint64_t seed, const fs::path& root) {
  if (spec.num_classes == 0 || spec.clips_per_class == 0 || spec.frames == 0) {
    throw ConfigError("synthetic spec needs at least one class, clip and frame");
  }
  if (spec.image_size < 32) throw ConfigError("synthetic image size must be at least 32");
  const std::size_t S = spec.image_size;
  fs::create_directories(root / spec.split / "labels");
  {
    std::ofstream classes(root / "classes.txt");
    for (std::size_t c = 0; c < spec.num_classes; ++c) classes << class_name_for(c) << '\n';
  }
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const MotionPattern pattern = pattern_for_class(c);
    const double speed_scale = static_cast<double>(c / 3 + 1);
    for (std::size_t v = 0; v < spec.clips_per_class; ++v) {
      std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(v)};
      std::mt19937_64 rng(sq);
      const std::size_t w = uniform_index(rng, S / 5, S * 7 / 20);
      const std::size_t h = uniform_index(rng, S / 5, S * 7 / 20);
      std::uint8_t bg[3], fg[3];
      for (auto& x : bg) x = static_cast<std::uint8_t>(uniform_index(rng, 0, 70));
      for (auto& x : fg) x = static_cast<std::uint8_t>(uniform_index(rng, 150, 255));
      const double span_x = static_cast<double>(S - w), span_y = static_cast<double>(S - h);
      const double T = static_cast<double>(std::max<std::size_t>(spec.frames - 1, 1));
      const double travel = uniform(rng, 0.4, 0.9);
      const double dir = unit(rng) < 0.5 ? -1.0 : 1.0;
      const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
      const double fixed_x = uniform(rng, 0.0, span_x), fixed_y = uniform(rng, 0.0, span_y);

      auto position = [&](double t, double span, double travel_frac) {
        const double dist = std::min(travel_frac * speed_scale, 1.0) * span;
        const double start = dir > 0 ? (span - dist) * 0.5 : (span + dist) * 0.5;
        return start + dir * dist * t / T;
      };
      char id_buf[48];
      std::snprintf(id_buf, sizeof id_buf, "c%zu_v%03zu", c, v);
      const std::string video_id = id_buf;
      const fs::path dir_path = root / spec.split / class_name_for(c) / video_id;
      fs::create_directories(dir_path);
      std::ofstream labels(root / spec.split / "labels" / (video_id + ".txt"));
      for (std::size_t f = 0; f < spec.frames; ++f) {
        const double t = static_cast<double>(f);
        double x = fixed_x, y = fixed_y;
        switch (pattern) {
          case MotionPattern::HorizontalDrift: x = position(t, span_x, travel); break;
          case MotionPattern::VerticalDrift: y = position(t, span_y, travel); break;
          case MotionPattern::Oscillation: {
            const double amp = 0.5 * span_x * std::min(travel * speed_scale, 1.0);
            x = span_x * 0.5 + amp * std::sin(phase + 2 * std::numbers::pi * t / 8.0);
            break;
          }
        }
        const std::size_t x0 = std::min(static_cast<std::size_t>(std::lround(std::clamp(x, 0.0, span_x))), S - w);
        const std::size_t y0 = std::min(static_cast<std::size_t>(std::lround(std::clamp(y, 0.0, span_y))), S - h);
        RgbImage img(S, S);
        for (std::size_t r = 0; r < S; ++r)
          for (std::size_t col = 0; col < S; ++col) {
            const bool inside = r >= y0 && r < y0 + h && col >= x0 && col < x0 + w;
            for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, col, ch) = inside ? fg[ch] : bg[ch];
          }
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05zu.png", f);
        write_png(dir_path / name, img);
        labels << f << ' ' << c << ' ' << x0 << ' ' << y0 << ' ' << x0 + w << ' ' << y0 + h << '\n';
      }
    }
  }
}

}  // namespace tfnet
