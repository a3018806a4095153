#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfnet/box.hpp"
#include "tfnet/image.hpp"

namespace tfnet {

namespace fs = std::filesystem;

// One line per class; the line number is the class id.
std::vector<std::string> read_class_list(const fs::path& path);

// Label lines `frame_index class_id x1 y1 x2 y2`, grouped into one frame per
// index in order of first appearance. Throws DataError naming the line.
std::vector<GroundTruthFrame> parse_annotations(std::istream& in, std::size_t num_classes);
std::vector<GroundTruthFrame> parse_annotations(const fs::path& path, std::size_t num_classes);

struct VideoRecord {
  std::string video_id;
  fs::path directory;
  std::vector<fs::path> frames;  // sorted by name
  fs::path label_path;
  std::size_t class_id = 0;
  std::vector<GroundTruthFrame> labels;

  std::size_t frame_count() const { return frames.size(); }
};

struct DatasetIndex {
  fs::path root;
  std::string split;
  std::vector<std::string> class_names;
  std::vector<VideoRecord> videos;  // ordered by (class id, video id)
};

// Scans <root>/<split>/<class>/<video>/frame_*.{png,ppm} with labels in
// <root>/<split>/labels/<video>.txt and classes in <root>/classes.txt.
DatasetIndex build_index(const fs::path& root, const std::string& split = "train");

// Dataset-wide frame id of frame `frame` of video `video`: frame counts of
// earlier videos plus the frame index.
std::size_t frame_uid(const DatasetIndex& index, std::size_t video, std::size_t frame);
// Every labelled frame of the index in source pixels, keyed by frame_uid.
std::vector<GroundTruthFrame> all_ground_truth(const DatasetIndex& index);

// Frames of a video directory (frame_*.png / frame_*.ppm), sorted.
std::vector<fs::path> list_frames(const fs::path& video_dir);

enum class KeyframeChoice { First, Middle, Last };

struct ClipOptions {
  std::size_t depth = 16;
  std::size_t frame_size = 224;
  std::size_t keyframe_size = 448;
  KeyframeChoice keyframe = KeyframeChoice::Last;
};

struct ClipSample {
  std::vector<RgbImage> frames;    // depth frames at frame_size
  RgbImage keyframe;               // keyframe_size
  GroundTruthFrame gt;             // keyframe pixel coordinates
  std::size_t stride = 1;
  std::vector<std::size_t> indices;  // source frame of each entry in frames
  std::size_t source_width = 0;      // keyframe size before rescaling
  std::size_t source_height = 0;
};

// start + k * stride for k < depth, clamped to the last frame.
std::vector<std::size_t> clip_indices(std::size_t frame_count, std::size_t start, std::size_t stride,
                                      std::size_t depth);

// Loads and rescales the frames (indices clamped as above), then picks the
// keyframe and its GT (scaled from source to keyframe pixels).
ClipSample load_clip(const VideoRecord& video, std::size_t start, std::size_t stride,
                     const ClipOptions& options);
// Same for a bare directory of frames without labels.
ClipSample load_clip(const fs::path& video_dir, std::size_t start, std::size_t stride,
                     const ClipOptions& options);

// Crop window in keyframe pixels.
struct CropWindow {
  double x = 0, y = 0, width = 0, height = 0;
};

Box flip_box(const Box& box, double image_width);
// Maps a box through crop then rescale by (sx, sy); no clipping.
Box crop_rescale_box(const Box& box, const CropWindow& window, double sx, double sy);

struct AugmentOptions {
  bool flip = true;
  bool crop = true;
  bool jitter = true;
  double min_crop_scale = 0.7;    // side of the crop window relative to the image
  double jitter_strength = 0.2;   // brightness / contrast / saturation within +-20%
  double min_box_fraction = 0.25; // boxes keeping less area are dropped
};

struct AugmentParams {
  bool flip = false;
  double crop_x = 0, crop_y = 0, crop_scale = 1;  // fractions of the image
  double brightness = 1, contrast = 1, saturation = 1;
};

AugmentParams sample_augmentation(const AugmentOptions& options, std::uint64_t seed);
// Applies the same geometric transform to every frame, the keyframe and its
// boxes, then the colour jitter.
ClipSample apply_augmentation(const ClipSample& clip, const AugmentParams& params,
                              const AugmentOptions& options);
ClipSample augment(const ClipSample& clip, const AugmentOptions& options, std::uint64_t seed);

enum class MotionPattern { HorizontalDrift, VerticalDrift, Oscillation };

struct SynthSpec {
  std::size_t num_classes = 2;
  std::size_t clips_per_class = 10;
  std::size_t image_size = 112;
  std::size_t frames = 16;
  std::string split = "train";
};

MotionPattern pattern_for_class(std::size_t class_id);

// Writes a dataset of rectangles moving with a per-class motion pattern.
// Output depends only on (spec, seed).
void synth_dataset(const SynthSpec& spec, std::uint64_t seed, const fs::path& root);

}  // namespace tfnet
