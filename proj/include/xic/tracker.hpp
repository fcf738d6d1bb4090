#pragma once

// Online RGB-T tracking with the fused branch: padded search windows at three
// scales, correlation-filter scoring, argmax localization with optional
// sub-pixel refinement, and the exponential filter update.

#include <optional>
#include <string>
#include <vector>

#include "xic/data.hpp"
#include "xic/dcf.hpp"
#include "xic/features.hpp"

namespace xic {

struct TrackerConfig {
  double padding = 2.0;  // window side = target side * padding, per axis
  double scale_step = 1.0275;
  double scale_penalty = 0.9925;
  double alpha = 0.01;
  bool subpixel = true;
  double min_size = 4.0;
  double lambda = 1e-4;
  double sigma_divisor = 12.5;
  std::size_t input_size = 125;
  bool window = true;
  FusionMode fusion = FusionMode::Concat;

  void validate() const;
  std::vector<double> scales() const { return {1.0 / scale_step, 1.0, scale_step}; }
};

struct TrackerState {
  CorrelationFilter filter;
  double center_row = 0.0;  // frame coordinates, pixel centers at i + 0.5
  double center_col = 0.0;
  double target_h = 0.0;
  double target_w = 0.0;
  std::size_t frame_h = 0;
  std::size_t frame_w = 0;
  std::vector<std::size_t> scale_history;

  BoundingBox box() const;
};

TrackerState tracker_init(const Image& rgb, const Image& thermal, const BoundingBox& box,
                          const ModelParams& params, const TrackerConfig& cfg);

// Fused response for a window of the given scale around the current center.
RealPlane score_window(const TrackerState& state, const Image& rgb, const Image& thermal,
                       double scale, const ModelParams& params, const TrackerConfig& cfg);

struct Localization {
  std::size_t scale_index = 1;
  double row = 0.0;  // peak in patch pixels, possibly fractional
  double col = 0.0;
  double peak = 0.0;
};

// Global argmax over (scale, position); non-unit scales are multiplied by
// the penalty, and the unit scale wins ties.
Localization localize(const std::vector<RealPlane>& responses, const TrackerConfig& cfg);

BoundingBox track_frame(TrackerState& state, const Image& rgb, const Image& thermal,
                        const ModelParams& params, const TrackerConfig& cfg);

struct SequenceRun {
  std::vector<BoundingBox> boxes;
  double seconds = 0.0;  // init + tracking, excluding image loading
  double fps = 0.0;
};

SequenceRun run_sequence(const LoadedFrames& frames, const BoundingBox& init,
                         const ModelParams& params, const TrackerConfig& cfg);
// Uses `init` when given, else the first RGB (then thermal) ground-truth box.
SequenceRun run_sequence(const SequencePair& seq, const std::optional<BoundingBox>& init,
                         const ModelParams& params, const TrackerConfig& cfg);

// <out>/<name>.txt with one x,y,w,h line per frame, and <out>/<name>_timing.json.
void write_trajectory(const std::string& out_dir, const std::string& name, const SequenceRun& run);

}  // namespace xic
