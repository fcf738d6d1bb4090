#pragma once

// Aligned RGB-thermal sequences on disk, ground-truth parsing, unsupervised
// center-crop training pairs, and the synthetic sequence generator.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xic/image.hpp"

namespace xic {

struct BoundingBox {
  double x = 0.0;  // top-left, pixels
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }
  bool valid() const;
  bool operator==(const BoundingBox&) const = default;
};

// Box given by its center, in patch coordinates.
struct CenteredBox {
  double row = 0.0;
  double col = 0.0;
  double h = 0.0;
  double w = 0.0;
};

struct SequencePair {
  std::string name;
  std::string directory;
  std::vector<std::string> rgb_frames;
  std::vector<std::string> t_frames;
  std::optional<std::vector<BoundingBox>> gt_rgb;
  std::optional<std::vector<BoundingBox>> gt_t;
  std::vector<std::string> attributes;

  std::size_t size() const { return rgb_frames.size(); }
};

// Frames t, t+1 (and t+2 for three-frame training) cropped from both modalities.
struct TrainingPair {
  Patch template_rgb;
  Patch search_rgb;
  Patch template_t;
  Patch search_t;
  Patch third_rgb;  // empty unless sequence_length == 3
  Patch third_t;
  CenteredBox pseudo_box;

  bool has_third() const { return !third_rgb.empty(); }
};

// 8-bit PNG <-> unit-range floats. Gray files load as 1 channel, color as 3.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

struct ImageInfo {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};
// Reads only the header; throws a format error naming the file.
ImageInfo probe_png(const std::string& path);

SequencePair load_sequence(const std::string& directory);
// Lists sequence directories (those with a visible/ subdirectory), sorted.
std::vector<std::string> list_sequences(const std::string& root);

struct LoadedFrames {
  std::vector<Image> rgb;
  std::vector<Image> t;
};
LoadedFrames load_frames(const SequencePair& seq);

std::vector<BoundingBox> parse_groundtruth(const std::string& path);
// `source` names the origin in error messages.
std::vector<BoundingBox> parse_groundtruth_text(std::string_view text, const std::string& source);
std::string format_box(const BoundingBox& b);

// Bilinear resample of the window centered at (center_row, center_col) in
// continuous pixel coordinates. Out-of-frame samples replicate the border.
// Patch pixel i samples frame coordinate center + (i - out/2) * win/out.
Image crop_resize(const Image& src, double center_row, double center_col, double win_h,
                  double win_w, std::size_t out_h, std::size_t out_w);

struct CropOptions {
  double crop_ratio = 0.5;
  std::size_t out_size = 125;
  std::size_t stride = 1;
  int sequence_length = 2;
};

std::vector<TrainingPair> center_crop_pairs(const std::vector<Image>& rgb,
                                            const std::vector<Image>& t, const CropOptions& opt);
std::vector<TrainingPair> center_crop_pairs(const SequencePair& seq, const CropOptions& opt);

struct SynthConfig {
  int train_sequences = 20;
  int test_sequences = 5;
  int train_frames = 26;
  int test_frames = 50;
  std::size_t canvas = 256;
  int distractors = 2;
  double object_min = 24.0;
  double object_max = 36.0;
  double speed = 2.0;
  double turn_probability = 0.05;
  double lighting_amplitude = 0.35;
  double rgb_noise = 0.02;
  double thermal_noise = 0.02;
  int occluders = 1;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthSequence {
  std::string name;
  std::vector<Image> rgb;
  std::vector<Image> t;
  std::vector<BoundingBox> gt;
  std::vector<std::string> attributes;
};

struct SynthDataset {
  std::vector<SynthSequence> train;
  std::vector<SynthSequence> test;
};

SynthDataset synth_generate(const SynthConfig& cfg);
// Renders one sequence; exposed for tests that need custom motion.
SynthSequence synth_sequence(const SynthConfig& cfg, std::uint64_t seed, int frames,
                             const std::string& name);

// Writes <root>/<name>/{visible,infrared}/000001.png ... plus ground truth
// (identical for both modalities) and attributes.txt.
void write_sequence(const SynthSequence& seq, const std::string& root);

}  // namespace xic
