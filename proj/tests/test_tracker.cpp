#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "support.hpp"
#include "xic/tracker.hpp"

using namespace xic;

namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.feature_channels = 8;
  m.input_size = 48;
  return m;
}

TrackerConfig small_tracker() {
  TrackerConfig c;
  c.input_size = 48;
  return c;
}

// A bright textured square on a dim random background.
void scene(Image& rgb, Image& t, double cy, double cx, double side, std::uint64_t seed) {
  std::mt19937_64 r(seed);
  std::uniform_real_distribution<float> u(0.0f, 0.3f);
  for (float& v : rgb.data) v = u(r);
  for (float& v : t.data) v = 0.5f * u(r);
  for (std::size_t y = 0; y < rgb.height; ++y)
    for (std::size_t x = 0; x < rgb.width; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      if (std::abs(dy) > side / 2 || std::abs(dx) > side / 2) continue;
      const float stripe = ((x / 3) + (y / 5)) % 2 ? 0.9f : 0.6f;
      rgb.at(0, y, x) = stripe;
      rgb.at(1, y, x) = 1.0f - stripe;
      rgb.at(2, y, x) = 0.5f;
      t.at(0, y, x) = 0.8f;
    }
}

}  // namespace

TEST_CASE("the initial frame scores its peak at the patch center") {
  const ModelParams params = init_model(small_model(), 2);
  const TrackerConfig cfg = small_tracker();
  Image rgb(3, 96, 96), t(1, 96, 96);
  scene(rgb, t, 40.0, 50.0, 20.0, 1);
  const BoundingBox box{40.0, 30.0, 20.0, 20.0};
  const TrackerState s = tracker_init(rgb, t, box, params, cfg);
  CHECK(s.box() == box);
  const RealPlane r = score_window(s, rgb, t, 1.0, params, cfg);
  const Localization loc = localize({r}, cfg);
  CHECK(std::abs(loc.row - 24.0) <= 1.0);
  CHECK(std::abs(loc.col - 24.0) <= 1.0);
}

TEST_CASE("tracker_init rejects degenerate boxes and frames") {
  const ModelParams params = init_model(small_model(), 2);
  const TrackerConfig cfg = small_tracker();
  Image rgb(3, 64, 64), t(1, 64, 64);
  CHECK_THROWS_AS(tracker_init(rgb, t, {10, 10, 1, 1}, params, cfg), Error);
  CHECK_THROWS_AS(tracker_init(rgb, t, {60, 10, 10, 10}, params, cfg), Error);
  CHECK_THROWS_AS(tracker_init(rgb, Image(1, 32, 64), {10, 10, 10, 10}, params, cfg), Error);
  CHECK_THROWS_AS(tracker_init(t, t, {10, 10, 10, 10}, params, cfg), Error);
  TrackerConfig bad = cfg;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(tracker_init(rgb, t, {10, 10, 10, 10}, params, bad), Error);
}

TEST_CASE("alpha zero keeps the initial filter") {
  const ModelParams params = init_model(small_model(), 2);
  TrackerConfig cfg = small_tracker();
  cfg.alpha = 0.0;
  Image rgb(3, 96, 96), t(1, 96, 96);
  scene(rgb, t, 40.0, 50.0, 20.0, 1);
  TrackerState s = tracker_init(rgb, t, {40, 30, 20, 20}, params, cfg);
  const auto before = s.filter.spectrum;
  scene(rgb, t, 43.0, 52.0, 20.0, 2);
  track_frame(s, rgb, t, params, cfg);
  REQUIRE(s.filter.spectrum.size() == before.size());
  for (std::size_t c = 0; c < before.size(); ++c) CHECK(s.filter.spectrum[c] == before[c]);
}

TEST_CASE("a static scene does not drift") {
  const ModelParams params = init_model(small_model(), 5);
  const TrackerConfig cfg = small_tracker();
  LoadedFrames frames;
  Image rgb(3, 96, 96), t(1, 96, 96);
  scene(rgb, t, 48.0, 48.0, 24.0, 3);
  for (int i = 0; i < 50; ++i) {
    frames.rgb.push_back(rgb);
    frames.t.push_back(t);
  }
  const BoundingBox init{36, 36, 24, 24};
  const SequenceRun run = run_sequence(frames, init, params, cfg);
  REQUIRE(run.boxes.size() == 50);
  CHECK(run.boxes[0] == init);
  for (const auto& b : run.boxes) {
    CHECK(std::abs(b.center_x() - 48.0) < 1.0);
    CHECK(std::abs(b.center_y() - 48.0) < 1.0);
  }
  CHECK(run.fps > 0.0);
  CHECK(run.seconds > 0.0);
}

TEST_CASE("the tracker follows a translating target") {
  const ModelParams params = init_model(small_model(), 5);
  const TrackerConfig cfg = small_tracker();
  LoadedFrames frames;
  for (int i = 0; i < 12; ++i) {
    Image rgb(3, 120, 120), t(1, 120, 120);
    scene(rgb, t, 50.0 + i, 40.0 + 2.0 * i, 24.0, 100 + i);
    frames.rgb.push_back(rgb);
    frames.t.push_back(t);
  }
  const SequenceRun run = run_sequence(frames, {28, 38, 24, 24}, params, cfg);
  const auto& last = run.boxes.back();
  CHECK(std::abs(last.center_x() - 62.0) < 3.0);
  CHECK(std::abs(last.center_y() - 61.0) < 3.0);
}

TEST_CASE("tracking is deterministic and stays inside the frame") {
  const ModelParams params = init_model(small_model(), 8);
  const TrackerConfig cfg = small_tracker();
  LoadedFrames frames;
  for (int i = 0; i < 8; ++i) {
    frames.rgb.push_back(xt::random_image(3, 64, 80));
    frames.t.push_back(xt::random_image(1, 64, 80));
  }
  const BoundingBox init{1, 1, 30, 20};
  const SequenceRun a = run_sequence(frames, init, params, cfg);
  const SequenceRun b = run_sequence(frames, init, params, cfg);
  CHECK(a.boxes == b.boxes);
  for (const auto& box : a.boxes) {
    CHECK(box.x >= -1e-9);
    CHECK(box.y >= -1e-9);
    CHECK(box.x + box.w <= 80.0 + 1e-9);
    CHECK(box.y + box.h <= 64.0 + 1e-9);
    CHECK(box.w >= cfg.min_size);
  }
}

TEST_CASE("localize applies the scale penalty and keeps the unit scale on ties") {
  TrackerConfig cfg;
  cfg.subpixel = false;
  RealPlane a(5, 5), b(5, 5), c(5, 5);
  a(1, 1) = 1.0;
  b(2, 3) = 1.0;
  c(4, 4) = 1.0;
  Localization loc = localize({a, b, c}, cfg);
  CHECK(loc.scale_index == 1);
  CHECK(loc.row == 2.0);
  CHECK(loc.col == 3.0);
  a(1, 1) = 1.005;  // still below 1 after the 0.9925 penalty
  CHECK(localize({a, b, c}, cfg).scale_index == 1);
  a(1, 1) = 1.01;
  loc = localize({a, b, c}, cfg);
  CHECK(loc.scale_index == 0);
  CHECK(loc.peak == doctest::Approx(1.01 * 0.9925));
  cfg.scale_penalty = 1.0;
  a(1, 1) = 1.0;
  c(4, 4) = 1.0;
  CHECK(localize({a, b, c}, cfg).scale_index == 1);
}

TEST_CASE("sub-pixel refinement fits a parabola through the peak") {
  TrackerConfig cfg;
  RealPlane r(7, 7);
  // Samples of -(x - 3.25)^2 along the columns of row 3.
  for (std::size_t j = 0; j < 7; ++j) r(3, j) = 10.0 - (j - 3.25) * (j - 3.25);
  for (std::size_t i = 0; i < 7; ++i)
    if (i != 3) r(i, 3) = r(3, 3) - 1.0;
  const Localization loc = localize({r}, cfg);
  CHECK(loc.col == doctest::Approx(3.25));
  CHECK(loc.row == doctest::Approx(3.0));
  CHECK_THROWS_AS(localize({}, cfg), Error);
}

TEST_CASE("trajectory files") {
  SequenceRun run;
  run.boxes = {{1, 2, 3, 4}, {1.5, 2.5, 3.5, 4.5}};
  run.seconds = 0.5;
  run.fps = 4.0;
  const auto dir = xt::scratch_dir("traj");
  write_trajectory(dir.string(), "seq", run);
  CHECK(parse_groundtruth((dir / "seq.txt").string()) == run.boxes);
  std::ifstream is(dir / "seq_timing.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j.at("frames").get<int>() == 2);
  CHECK(j.at("fps").get<double>() == 4.0);
}
