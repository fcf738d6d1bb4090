#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "xic/data.hpp"
#include "xic/error.hpp"

namespace fs = std::filesystem;

namespace xic {

void SynthConfig::validate() const {
  require(train_sequences >= 0 && test_sequences >= 0, ErrorKind::InvalidConfig,
          "synth: sequence counts must be non-negative");
  require(train_frames >= 3 && test_frames >= 2, ErrorKind::InvalidConfig,
          "synth: too few frames per sequence");
  require(canvas >= 64, ErrorKind::InvalidConfig, "synth: canvas must be at least 64 px");
  require(object_min >= 4.0 && object_max >= object_min &&
              object_max * 3.0 < static_cast<double>(canvas),
          ErrorKind::InvalidConfig, "synth: object size range does not fit the canvas");
  require(speed >= 0.0 && turn_probability >= 0.0 && turn_probability <= 1.0,
          ErrorKind::InvalidConfig, "synth: bad motion parameters");
  require(lighting_amplitude >= 0.0 && lighting_amplitude < 1.0, ErrorKind::InvalidConfig,
          "synth: lighting_amplitude must be in [0,1)");
  require(rgb_noise >= 0.0 && thermal_noise >= 0.0 && distractors >= 0 && occluders >= 0,
          ErrorKind::InvalidConfig, "synth: negative noise or counts");
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * u2);
  }

 private:
  std::mt19937_64 eng_;
};

struct Grating {
  double fx, fy, phase;
  double amp[3];
};

struct Blotch {
  double cx, cy, rx, ry;
  double color[3];
};

struct Object {
  double cx, cy, w, h;
  double vx, vy;
  bool ellipse;
  double color[3];
  double stripe_dir, stripe_period, stripe_contrast;
  double temperature;
};

struct Occluder {
  double x0, x1;
};

struct Scene {
  std::size_t size;
  std::vector<Grating> rgb_gratings;
  std::vector<Blotch> blotches;
  double base[3];
  double t_base, t_gx, t_gy;
  std::vector<Grating> t_gratings;
  std::vector<Object> objects;  // objects[0] is the target
  std::vector<Occluder> occluders;
  double light_period, light_phase, light_tilt;
  std::vector<double> bg_rgb;  // static background, rendered once
  std::vector<double> bg_t;
};

void render_background(Scene& s);

Object make_object(Rng& rng, const SynthConfig& cfg, bool target, double cx, double cy) {
  Object o{};
  o.w = rng.uniform(cfg.object_min, cfg.object_max);
  o.h = rng.uniform(cfg.object_min, cfg.object_max);
  o.cx = cx;
  o.cy = cy;
  const double dir = rng.uniform(0.0, kTau);
  o.vx = cfg.speed * std::cos(dir);
  o.vy = cfg.speed * std::sin(dir);
  o.ellipse = rng.uniform() < 0.5;
  for (double& c : o.color) c = rng.uniform(0.15, 0.85);
  o.stripe_dir = rng.uniform(0.0, std::numbers::pi);
  o.stripe_period = rng.uniform(5.0, 10.0);
  o.stripe_contrast = rng.uniform(0.12, 0.25);
  o.temperature = target ? rng.uniform(0.75, 0.9) : rng.uniform(0.3, 0.85);
  return o;
}

Scene make_scene(Rng& rng, const SynthConfig& cfg, bool centered_target) {
  Scene s{};
  s.size = cfg.canvas;
  const double n = static_cast<double>(cfg.canvas);
  for (double& b : s.base) b = rng.uniform(0.3, 0.7);
  for (int k = 0; k < 6; ++k) {
    const double f = rng.uniform(0.03, 0.2), a = rng.uniform(0.0, kTau);
    Grating g{f * std::cos(a), f * std::sin(a), rng.uniform(0.0, kTau), {}};
    for (double& amp : g.amp) amp = rng.uniform(0.0, 0.08);
    s.rgb_gratings.push_back(g);
  }
  const int blotches = 25;
  for (int k = 0; k < blotches; ++k) {
    Blotch b{rng.uniform(0.0, n), rng.uniform(0.0, n), rng.uniform(3.0, 12.0),
             rng.uniform(3.0, 12.0), {}};
    for (double& c : b.color) c = rng.uniform(0.1, 0.9);
    s.blotches.push_back(b);
  }
  s.t_base = rng.uniform(0.15, 0.25);
  s.t_gx = rng.uniform(-0.05, 0.05);
  s.t_gy = rng.uniform(-0.05, 0.05);
  for (int k = 0; k < 2; ++k) {
    const double f = rng.uniform(0.01, 0.04), a = rng.uniform(0.0, kTau);
    s.t_gratings.push_back({f * std::cos(a), f * std::sin(a), rng.uniform(0.0, kTau),
                            {rng.uniform(0.0, 0.02), 0.0, 0.0}});
  }

  const double margin = cfg.object_max;
  const double jitter = centered_target ? 0.08 * n : 0.25 * n;
  s.objects.push_back(make_object(rng, cfg, true, 0.5 * n + rng.uniform(-jitter, jitter),
                                  0.5 * n + rng.uniform(-jitter, jitter)));
  for (int k = 0; k < cfg.distractors; ++k)
    s.objects.push_back(make_object(rng, cfg, false, rng.uniform(margin, n - margin),
                                    rng.uniform(margin, n - margin)));
  for (int k = 0; k < cfg.occluders; ++k) {
    const double x = rng.uniform(0.15 * n, 0.85 * n);
    s.occluders.push_back({x, x + rng.uniform(6.0, 12.0)});
  }
  s.light_period = rng.uniform(18.0, 36.0);
  s.light_phase = rng.uniform(0.0, kTau);
  s.light_tilt = rng.uniform(-0.25, 0.25);
  render_background(s);
  return s;
}

void render_background(Scene& s) {
  const std::size_t n = s.size;
  const double nn = static_cast<double>(n);
  s.bg_rgb.assign(3 * n * n, 0.0);
  s.bg_t.assign(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double py = static_cast<double>(r) + 0.5;
    for (std::size_t c = 0; c < n; ++c) {
      const double px = static_cast<double>(c) + 0.5;
      double col[3] = {s.base[0], s.base[1], s.base[2]};
      for (const Grating& g : s.rgb_gratings) {
        const double v = std::sin(kTau * (g.fx * px + g.fy * py) + g.phase);
        for (int k = 0; k < 3; ++k) col[k] += g.amp[k] * v;
      }
      for (const Blotch& b : s.blotches) {
        const double dx = (px - b.cx) / b.rx, dy = (py - b.cy) / b.ry;
        if (dx * dx + dy * dy <= 1.0)
          for (int k = 0; k < 3; ++k) col[k] = b.color[k];
      }
      double temp = s.t_base + s.t_gx * (px / nn - 0.5) + s.t_gy * (py / nn - 0.5);
      for (const Grating& g : s.t_gratings)
        temp += g.amp[0] * std::sin(kTau * (g.fx * px + g.fy * py) + g.phase);
      for (int k = 0; k < 3; ++k) s.bg_rgb[k * n * n + r * n + c] = col[k];
      s.bg_t[r * n + c] = temp;
    }
  }
}

void step_objects(Scene& s, Rng& rng, const SynthConfig& cfg) {
  const double n = static_cast<double>(s.size);
  for (Object& o : s.objects) {
    if (rng.uniform() < cfg.turn_probability) {
      const double turn = rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
      const double c = std::cos(turn), sn = std::sin(turn);
      const double vx = o.vx * c - o.vy * sn;
      o.vy = o.vx * sn + o.vy * c;
      o.vx = vx;
    }
    o.cx += o.vx;
    o.cy += o.vy;
    const double mx = 0.5 * o.w + 2.0, my = 0.5 * o.h + 2.0;
    if (o.cx < mx) { o.cx = 2.0 * mx - o.cx; o.vx = -o.vx; }
    if (o.cx > n - mx) { o.cx = 2.0 * (n - mx) - o.cx; o.vx = -o.vx; }
    if (o.cy < my) { o.cy = 2.0 * my - o.cy; o.vy = -o.vy; }
    if (o.cy > n - my) { o.cy = 2.0 * (n - my) - o.cy; o.vy = -o.vy; }
  }
}

// Normalized radius in [0,1] inside the shape, negative outside.
double inside(const Object& o, double px, double py) {
  const double dx = (px - o.cx) / (0.5 * o.w);
  const double dy = (py - o.cy) / (0.5 * o.h);
  if (o.ellipse) {
    const double r2 = dx * dx + dy * dy;
    return r2 <= 1.0 ? std::sqrt(r2) : -1.0;
  }
  const double m = std::max(std::abs(dx), std::abs(dy));
  return m <= 1.0 ? m : -1.0;
}

float quantize(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

void render(const Scene& s, int frame, Rng& rng, const SynthConfig& cfg, Image& rgb, Image& t,
            double& gain_out) {
  const std::size_t n = s.size;
  rgb = Image(3, n, n);
  t = Image(1, n, n);
  const double gain =
      1.0 + cfg.lighting_amplitude * std::sin(kTau * frame / s.light_period + s.light_phase);
  gain_out = gain;
  const double nn = static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double py = static_cast<double>(r) + 0.5;
    for (std::size_t c = 0; c < n; ++c) {
      const double px = static_cast<double>(c) + 0.5;
      const std::size_t at = r * n + c;
      double col[3] = {s.bg_rgb[at], s.bg_rgb[n * n + at], s.bg_rgb[2 * n * n + at]};
      double temp = s.bg_t[at];
      for (std::size_t k = 1; k <= s.objects.size(); ++k) {
        const Object& o = s.objects[k % s.objects.size()];
        const double rho = inside(o, px, py);
        if (rho < 0.0) continue;
        const double u = (px - o.cx) * std::cos(o.stripe_dir) + (py - o.cy) * std::sin(o.stripe_dir);
        const double stripe = std::sin(kTau * u / o.stripe_period) >= 0.0 ? 1.0 : -1.0;
        for (int ch = 0; ch < 3; ++ch) col[ch] = o.color[ch] + o.stripe_contrast * stripe;
        temp = o.temperature * (1.0 - 0.2 * rho * rho);
      }
      for (const Occluder& oc : s.occluders) {
        if (px >= oc.x0 && px < oc.x1) {
          col[0] = col[1] = col[2] = 0.25;
          temp = 0.25;
        }
      }
      const double shade = gain * (1.0 + s.light_tilt * (px / nn - 0.5));
      for (int ch = 0; ch < 3; ++ch) {
        double v = col[ch] * shade;
        if (cfg.rgb_noise > 0.0) v += cfg.rgb_noise * rng.normal();
        rgb.data[(static_cast<std::size_t>(ch) * n + r) * n + c] = quantize(v);
      }
      if (cfg.thermal_noise > 0.0) temp += cfg.thermal_noise * rng.normal();
      t.data[r * n + c] = quantize(temp);
    }
  }
}

bool occluded(const Scene& s) {
  const Object& o = s.objects[0];
  for (const Occluder& oc : s.occluders)
    if (o.cx + 0.5 * o.w > oc.x0 && o.cx - 0.5 * o.w < oc.x1) return true;
  return false;
}

}  // namespace

SynthSequence synth_sequence(const SynthConfig& cfg, std::uint64_t seed, int frames,
                             const std::string& name) {
  cfg.validate();
  Rng rng(seed);
  const bool training = name.rfind("train", 0) == 0;
  Scene scene = make_scene(rng, cfg, training);
  SynthSequence seq;
  seq.name = name;
  bool any_occlusion = false;
  double min_gain = 1.0;
  for (int f = 0; f < frames; ++f) {
    if (f > 0) step_objects(scene, rng, cfg);
    Image rgb, t;
    double gain = 1.0;
    render(scene, f, rng, cfg, rgb, t, gain);
    min_gain = std::min(min_gain, gain);
    any_occlusion = any_occlusion || occluded(scene);
    const Object& o = scene.objects[0];
    seq.gt.push_back({o.cx - 0.5 * o.w, o.cy - 0.5 * o.h, o.w, o.h});
    seq.rgb.push_back(std::move(rgb));
    seq.t.push_back(std::move(t));
  }
  if (any_occlusion) seq.attributes.push_back("OCC");
  if (min_gain < 0.75) seq.attributes.push_back("LI");
  if (cfg.speed > 3.0) seq.attributes.push_back("FM");
  const Object& o = scene.objects[0];
  if (o.w * o.h < 28.0 * 28.0) seq.attributes.push_back("SO");
  return seq;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  std::mt19937_64 seeds(cfg.seed);
  char name[32];
  for (int i = 0; i < cfg.train_sequences; ++i) {
    std::snprintf(name, sizeof(name), "train_%03d", i);
    ds.train.push_back(synth_sequence(cfg, seeds(), cfg.train_frames, name));
  }
  for (int i = 0; i < cfg.test_sequences; ++i) {
    std::snprintf(name, sizeof(name), "test_%03d", i);
    ds.test.push_back(synth_sequence(cfg, seeds(), cfg.test_frames, name));
  }
  return ds;
}

void write_sequence(const SynthSequence& seq, const std::string& root) {
  const fs::path dir = fs::path(root) / seq.name;
  std::error_code ec;
  fs::create_directories(dir / "visible", ec);
  fs::create_directories(dir / "infrared", ec);
  require(!ec && fs::is_directory(dir / "visible"), ErrorKind::Io,
          "cannot create sequence directory " + dir.string());
  char file[32];
  for (std::size_t i = 0; i < seq.rgb.size(); ++i) {
    std::snprintf(file, sizeof(file), "%06zu.png", i + 1);
    write_png((dir / "visible" / file).string(), seq.rgb[i]);
    write_png((dir / "infrared" / file).string(), seq.t[i]);
  }
  for (const char* gt_name : {"groundtruth_visible.txt", "groundtruth_infrared.txt"}) {
    std::ofstream os(dir / gt_name);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + (dir / gt_name).string());
    for (const auto& b : seq.gt) os << format_box(b) << '\n';
  }
  std::ofstream attrs(dir / "attributes.txt");
  require(static_cast<bool>(attrs), ErrorKind::Io, "cannot write attributes for " + seq.name);
  for (std::size_t i = 0; i < seq.attributes.size(); ++i)
    attrs << (i ? "," : "") << seq.attributes[i];
  attrs << '\n';
}

}  // namespace xic
