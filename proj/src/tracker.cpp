#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "xic/error.hpp"
#include "xic/tracker.hpp"

namespace fs = std::filesystem;

namespace xic {

void TrackerConfig::validate() const {
  require(padding >= 1.0, ErrorKind::InvalidConfig, "tracker padding must be at least 1");
  require(scale_step >= 1.0, ErrorKind::InvalidConfig, "scale_step must be at least 1");
  require(scale_penalty > 0.0 && scale_penalty <= 1.0, ErrorKind::InvalidConfig,
          "scale_penalty must be in (0, 1]");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidConfig, "alpha must be in [0, 1]");
  require(min_size >= 1.0, ErrorKind::InvalidConfig, "min_size must be at least 1 px");
  require(lambda > 0.0 && sigma_divisor > 0.0, ErrorKind::InvalidConfig,
          "lambda and sigma_divisor must be positive");
  require(input_size >= 8, ErrorKind::InvalidConfig, "tracker input_size too small");
}

BoundingBox TrackerState::box() const {
  return {center_col - 0.5 * target_w, center_row - 0.5 * target_h, target_w, target_h};
}

namespace {

Tensor3 fused_features(const Image& rgb, const Image& thermal, double center_row,
                       double center_col, double win_h, double win_w, const ModelParams& params,
                       const TrackerConfig& cfg) {
  const std::size_t n = cfg.input_size;
  const Patch prgb = crop_resize(rgb, center_row, center_col, win_h, win_w, n, n);
  const Patch pt = crop_resize(thermal, center_row, center_col, win_h, win_w, n, n);
  const ExtractOptions opt{n, cfg.window};
  const Tensor3 frgb = extract_features(to_network_input(prgb, Modality::Rgb), params.rgb, opt);
  const Tensor3 ft =
      extract_features(to_network_input(pt, Modality::Thermal), params.thermal_extractor(), opt);
  return fuse(frgb, ft, cfg.fusion);
}

CorrelationFilter solve_at(const TrackerState& s, const Image& rgb, const Image& thermal,
                           const ModelParams& params, const TrackerConfig& cfg) {
  const std::size_t n = cfg.input_size;
  const Tensor3 feats = fused_features(rgb, thermal, s.center_row, s.center_col,
                                       cfg.padding * s.target_h, cfg.padding * s.target_w, params, cfg);
  const GaussianLabel label =
      gaussian_label(n, n, static_cast<double>(n) / cfg.sigma_divisor, n / 2, n / 2);
  return solve_filter(feats, label, cfg.lambda);
}

void check_frames(const Image& rgb, const Image& thermal) {
  require(!rgb.empty() && rgb.channels == 3, ErrorKind::InvalidInput,
          "tracker needs a 3-channel RGB frame");
  require(!thermal.empty() && thermal.height == rgb.height && thermal.width == rgb.width,
          ErrorKind::InvalidInput, "thermal frame must match the RGB frame size");
}

// Keeps the box inside the frame; the size is capped by the frame first.
void clamp_state(TrackerState& s, const TrackerConfig& cfg) {
  const double fh = static_cast<double>(s.frame_h), fw = static_cast<double>(s.frame_w);
  s.target_h = std::clamp(s.target_h, std::min(cfg.min_size, fh), fh);
  s.target_w = std::clamp(s.target_w, std::min(cfg.min_size, fw), fw);
  s.center_row = std::clamp(s.center_row, 0.5 * s.target_h, fh - 0.5 * s.target_h);
  s.center_col = std::clamp(s.center_col, 0.5 * s.target_w, fw - 0.5 * s.target_w);
}

double parabolic_offset(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

TrackerState tracker_init(const Image& rgb, const Image& thermal, const BoundingBox& box,
                          const ModelParams& params, const TrackerConfig& cfg) {
  cfg.validate();
  check_frames(rgb, thermal);
  require(std::isfinite(box.x) && std::isfinite(box.y) && box.w >= cfg.min_size &&
              box.h >= cfg.min_size,
          ErrorKind::InvalidInput,
          "initial box must be at least " + std::to_string(cfg.min_size) + " px on each side");
  const double fh = static_cast<double>(rgb.height), fw = static_cast<double>(rgb.width);
  require(box.x >= 0.0 && box.y >= 0.0 && box.x + box.w <= fw && box.y + box.h <= fh,
          ErrorKind::InvalidInput, "initial box lies outside the frame");
  TrackerState s;
  s.center_row = box.center_y();
  s.center_col = box.center_x();
  s.target_h = box.h;
  s.target_w = box.w;
  s.frame_h = rgb.height;
  s.frame_w = rgb.width;
  s.filter = solve_at(s, rgb, thermal, params, cfg);
  return s;
}

RealPlane score_window(const TrackerState& state, const Image& rgb, const Image& thermal,
                       double scale, const ModelParams& params, const TrackerConfig& cfg) {
  check_frames(rgb, thermal);
  const Tensor3 feats =
      fused_features(rgb, thermal, state.center_row, state.center_col,
                     cfg.padding * state.target_h * scale, cfg.padding * state.target_w * scale,
                     params, cfg);
  return response(state.filter, feats).map;
}

Localization localize(const std::vector<RealPlane>& responses, const TrackerConfig& cfg) {
  require(!responses.empty(), ErrorKind::InvalidInput, "localize: no responses");
  const std::size_t unit = responses.size() / 2;
  Localization best;
  bool found = false;
  std::size_t best_r = 0, best_c = 0;
  // Unit scale first so it keeps ties.
  std::vector<std::size_t> order{unit};
  for (std::size_t k = 0; k < responses.size(); ++k)
    if (k != unit) order.push_back(k);
  for (std::size_t k : order) {
    const RealPlane& r = responses[k];
    const double factor = k == unit ? 1.0 : cfg.scale_penalty;
    for (std::size_t i = 0; i < r.height; ++i)
      for (std::size_t j = 0; j < r.width; ++j) {
        const double v = r(i, j) * factor;
        if (!found || v > best.peak) {
          found = true;
          best.peak = v;
          best.scale_index = k;
          best_r = i;
          best_c = j;
        }
      }
  }
  best.row = static_cast<double>(best_r);
  best.col = static_cast<double>(best_c);
  if (cfg.subpixel) {
    const RealPlane& r = responses[best.scale_index];
    const std::size_t h = r.height, w = r.width;
    best.row += parabolic_offset(r((best_r + h - 1) % h, best_c), r(best_r, best_c),
                                 r((best_r + 1) % h, best_c));
    best.col += parabolic_offset(r(best_r, (best_c + w - 1) % w), r(best_r, best_c),
                                 r(best_r, (best_c + 1) % w));
  }
  return best;
}

BoundingBox track_frame(TrackerState& state, const Image& rgb, const Image& thermal,
                        const ModelParams& params, const TrackerConfig& cfg) {
  check_frames(rgb, thermal);
  require(rgb.height == state.frame_h && rgb.width == state.frame_w, ErrorKind::InvalidInput,
          "frame size changed during tracking");
  const std::vector<double> scales = cfg.scales();
  std::vector<RealPlane> responses;
  for (double s : scales) responses.push_back(score_window(state, rgb, thermal, s, params, cfg));
  const Localization loc = localize(responses, cfg);

  const double n = static_cast<double>(cfg.input_size);
  const double center = static_cast<double>(cfg.input_size / 2);
  // The response is periodic: shifts past half the patch wrap to negative.
  auto shift = [&](double peak) {
    double d = peak - center;
    if (d > 0.5 * n) d -= n;
    if (d < -0.5 * n) d += n;
    return d;
  };
  const double scale = scales[loc.scale_index];
  state.center_row += shift(loc.row) * cfg.padding * state.target_h * scale / n;
  state.center_col += shift(loc.col) * cfg.padding * state.target_w * scale / n;
  state.target_h *= scale;
  state.target_w *= scale;
  clamp_state(state, cfg);
  state.scale_history.push_back(loc.scale_index);

  if (cfg.alpha > 0.0) {
    const CorrelationFilter fresh = solve_at(state, rgb, thermal, params, cfg);
    state.filter = update_filter(state.filter, fresh, cfg.alpha);
  }
  return state.box();
}

SequenceRun run_sequence(const LoadedFrames& frames, const BoundingBox& init,
                         const ModelParams& params, const TrackerConfig& cfg) {
  require(!frames.rgb.empty() && frames.rgb.size() == frames.t.size(), ErrorKind::InvalidInput,
          "run_sequence: empty or misaligned frames");
  SequenceRun run;
  const auto start = std::chrono::steady_clock::now();
  TrackerState state = tracker_init(frames.rgb[0], frames.t[0], init, params, cfg);
  run.boxes.push_back(init);
  for (std::size_t f = 1; f < frames.rgb.size(); ++f)
    run.boxes.push_back(track_frame(state, frames.rgb[f], frames.t[f], params, cfg));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.fps = static_cast<double>(frames.rgb.size()) / std::max(run.seconds, 1e-9);
  return run;
}

SequenceRun run_sequence(const SequencePair& seq, const std::optional<BoundingBox>& init,
                         const ModelParams& params, const TrackerConfig& cfg) {
  require(seq.size() > 0, ErrorKind::InvalidInput, "sequence " + seq.name + " has no frames");
  BoundingBox first;
  if (init) {
    first = *init;
  } else if (seq.gt_rgb && !seq.gt_rgb->empty()) {
    first = seq.gt_rgb->front();
  } else if (seq.gt_t && !seq.gt_t->empty()) {
    first = seq.gt_t->front();
  } else {
    fail(ErrorKind::InvalidInput,
         "sequence " + seq.name + " has no ground truth; pass an initial box");
  }
  const LoadedFrames frames = load_frames(seq);
  return run_sequence(frames, first, params, cfg);
}

void write_trajectory(const std::string& out_dir, const std::string& name, const SequenceRun& run) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path traj = fs::path(out_dir) / (name + ".txt");
  std::ofstream os(traj);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + traj.string());
  for (const auto& b : run.boxes) os << format_box(b) << '\n';
  const fs::path timing = fs::path(out_dir) / (name + "_timing.json");
  std::ofstream ts(timing);
  require(static_cast<bool>(ts), ErrorKind::Io, "cannot write " + timing.string());
  nlohmann::json j = {{"sequence", name},
                      {"frames", run.boxes.size()},
                      {"seconds", run.seconds},
                      {"fps", run.fps}};
  ts << j.dump(2) << '\n';
}

}  // namespace xic
