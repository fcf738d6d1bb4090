#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "xic/error.hpp"
#include "xic/gradcheck.hpp"

namespace xic {

bool GradcheckReport::passed() const {
  return !stages.empty() &&
         std::all_of(stages.begin(), stages.end(), [](const StageResult& s) { return s.passed; });
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  require(analytic.size() == numeric.size(), ErrorKind::InvalidInput,
          "max_relative_error: length mismatch");
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-6 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double a, double b) {
  return a + (b - a) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

void fill(std::vector<double>& v, Rng& rng) {
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
}

Tensor3 random_tensor(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  Tensor3 t(c, h, w);
  fill(t.data, rng);
  return t;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central differences of `fn` over every coordinate of `x`, restoring x.
std::vector<double> numeric_grad(std::vector<double>& x, double h,
                                 const std::function<double()>& fn) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = fn();
    x[i] = keep - h;
    const double down = fn();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

StageResult finish(std::string name, std::vector<double> analytic,
                   const std::vector<double>& numeric, const GradcheckOptions& opt) {
  if (opt.inject_wrong_sign)
    for (double& v : analytic) v = -v;
  StageResult s;
  s.name = std::move(name);
  s.max_rel_error = max_relative_error(analytic, numeric);
  s.checked = analytic.size();
  s.passed = std::isfinite(s.max_rel_error) && s.max_rel_error <= opt.tolerance;
  return s;
}

StageResult check_conv(const GradcheckOptions& opt, Rng& rng) {
  Tensor3 x = random_tensor(3, 8, 8, rng);
  ConvKernel k(4, 3, 3);
  fill(k.weights, rng);
  fill(k.bias, rng);
  const Tensor3 r = random_tensor(4, 8, 8, rng);
  auto loss = [&] { return dot(conv2d_forward(x, k, 1).data, r.data); };
  const ConvGrads g = conv2d_backward(r, x, k, 1, true);
  std::vector<double> analytic = g.input.data;
  analytic.insert(analytic.end(), g.kernel.weights.begin(), g.kernel.weights.end());
  analytic.insert(analytic.end(), g.kernel.bias.begin(), g.kernel.bias.end());
  std::vector<double> numeric = numeric_grad(x.data, opt.step, loss);
  for (auto* v : {&k.weights, &k.bias}) {
    auto part = numeric_grad(*v, opt.step, loss);
    numeric.insert(numeric.end(), part.begin(), part.end());
  }
  return finish("conv2d", std::move(analytic), numeric, opt);
}

StageResult check_cf(const GradcheckOptions& opt, Rng& rng) {
  const std::size_t n = 8, ch = 4;
  Tensor3 tmpl = random_tensor(ch, n, n, rng);
  Tensor3 search = random_tensor(ch, n, n, rng);
  RealPlane label = gaussian_label(n, n, 1.5, n / 2, n / 2).map;
  RealPlane r(n, n);
  fill(r.data, rng);
  const double lambda = std::max(opt.lambda, 1e-2);
  auto loss = [&] { return dot(cf_forward(tmpl, label, lambda, search).response.map.data, r.data); };
  const CfGrads g = cf_backward(r, cf_forward(tmpl, label, lambda, search).tape);
  std::vector<double> analytic = g.template_features.data;
  analytic.insert(analytic.end(), g.search_features.data.begin(), g.search_features.data.end());
  analytic.insert(analytic.end(), g.label.data.begin(), g.label.data.end());
  std::vector<double> numeric = numeric_grad(tmpl.data, opt.step, loss);
  for (auto* v : {&search.data, &label.data}) {
    auto part = numeric_grad(*v, opt.step, loss);
    numeric.insert(numeric.end(), part.begin(), part.end());
  }
  return finish("cf_backward", std::move(analytic), numeric, opt);
}

StageResult check_extractor(const GradcheckOptions& opt, Rng& rng) {
  FeatureExtractorParams p = init_params(opt.seed, Modality::Rgb, 3, opt.channels);
  fill(p.conv1.bias, rng);
  fill(p.conv2.bias, rng);
  const Tensor3 x = random_tensor(3, opt.size, opt.size, rng);
  const Tensor3 r = random_tensor(opt.channels, opt.size, opt.size, rng);
  const ExtractOptions xo{opt.size, true};
  auto loss = [&] { return dot(extract_features(x, p, xo).data, r.data); };
  FeatureTape tape;
  extract_features(x, p, xo, &tape);
  const ExtractorGrads g = extract_features_backward(r, tape, p);
  std::vector<double> analytic;
  std::vector<double> numeric;
  for (auto [param, grad] : {std::pair{&p.conv1, &g.conv1}, std::pair{&p.conv2, &g.conv2}}) {
    analytic.insert(analytic.end(), grad->weights.begin(), grad->weights.end());
    analytic.insert(analytic.end(), grad->bias.begin(), grad->bias.end());
    for (auto* v : {&param->weights, &param->bias}) {
      auto part = numeric_grad(*v, opt.step, loss);
      numeric.insert(numeric.end(), part.begin(), part.end());
    }
  }
  return finish("extractor", std::move(analytic), numeric, opt);
}

ModelConfig gradcheck_model(const GradcheckOptions& opt) {
  ModelConfig cfg;
  cfg.share_weights = opt.share_weights;
  cfg.loss_norm = opt.loss_norm;
  cfg.feature_channels = opt.channels;
  cfg.input_size = opt.size;
  return apply_variant(opt.variant, cfg);
}

StageResult check_end_to_end(const GradcheckOptions& opt) {
  const ModelConfig cfg = gradcheck_model(opt);
  const std::vector<TrainingPair> batch = gradcheck_batch(opt);
  ModelParams params = init_model(cfg, opt.seed);
  StepOptions so;
  so.objective = objective_of(opt.variant);
  so.dcf.lambda = opt.lambda;
  ModelParams grad;
  batch_loss(batch, params, cfg, so, &grad);
  std::vector<double> flat = flatten(params);
  auto loss = [&] {
    unflatten(flat, params);
    return batch_loss(batch, params, cfg, so, nullptr).final_loss;
  };
  const std::vector<double> numeric = numeric_grad(flat, opt.step, loss);
  return finish("end_to_end", flatten(grad), numeric, opt);
}

Image blob_canvas(std::size_t channels, std::size_t side, Rng& rng, bool smooth) {
  Image img(channels, side, side);
  const int blobs = smooth ? 4 : 24;
  struct Blob {
    double r, c, s;
    std::vector<double> amp;
  };
  std::vector<Blob> list;
  for (int b = 0; b < blobs; ++b) {
    Blob bl{uniform(rng, 0.0, static_cast<double>(side)), uniform(rng, 0.0, static_cast<double>(side)),
            uniform(rng, 1.5, smooth ? 6.0 : 3.0), {}};
    for (std::size_t c = 0; c < channels; ++c) bl.amp.push_back(uniform(rng, -0.5, 0.5));
    list.push_back(bl);
  }
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        double v = 0.5;
        for (const auto& bl : list) {
          const double dr = static_cast<double>(i) - bl.r, dc = static_cast<double>(j) - bl.c;
          v += bl.amp[c] * std::exp(-(dr * dr + dc * dc) / (2.0 * bl.s * bl.s));
        }
        img.data[(c * side + i) * side + j] = static_cast<float>(v);
      }
  return img;
}

}  // namespace

std::vector<TrainingPair> gradcheck_batch(const GradcheckOptions& opt) {
  require(opt.size >= 8 && opt.channels >= 1 && opt.batch >= 1, ErrorKind::InvalidConfig,
          "gradcheck geometry too small");
  Rng rng(opt.seed * 7919 + 11);
  const std::size_t side = 3 * opt.size;
  const double n = static_cast<double>(opt.size);
  std::vector<TrainingPair> batch;
  for (std::size_t b = 0; b < opt.batch; ++b) {
    const Image rgb = blob_canvas(3, side, rng, false);
    const Image t = blob_canvas(1, side, rng, true);
    const double c = 0.5 * static_cast<double>(side);
    const double dr = uniform(rng, -2.0, 2.0), dc = uniform(rng, -2.0, 2.0);
    auto crop = [&](const Image& img, int k) {
      return crop_resize(img, c + k * dr, c + k * dc, n, n, opt.size, opt.size);
    };
    TrainingPair p;
    p.template_rgb = crop(rgb, 0);
    p.template_t = crop(t, 0);
    p.search_rgb = crop(rgb, 1);
    p.search_t = crop(t, 1);
    if (gradcheck_model(opt).sequence_length == 3) {
      p.third_rgb = crop(rgb, 2);
      p.third_t = crop(t, 2);
    }
    const double mid = static_cast<double>(opt.size / 2);
    p.pseudo_box = {mid, mid, 0.5 * n, 0.5 * n};
    batch.push_back(std::move(p));
  }
  return batch;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(opt.seed);
  GradcheckReport rep;
  rep.stages.push_back(check_conv(opt, rng));
  rep.stages.push_back(check_cf(opt, rng));
  rep.stages.push_back(check_extractor(opt, rng));
  rep.stages.push_back(check_end_to_end(opt));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace xic
