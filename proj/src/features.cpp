#include "xic/features.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace xic {

std::string to_string(FusionMode mode) {
  return mode == FusionMode::Concat ? "concat" : "average";
}

FusionMode parse_fusion(const std::string& text) {
  if (text == "concat") return FusionMode::Concat;
  if (text == "average") return FusionMode::Average;
  fail(ErrorKind::InvalidConfig, "unknown fusion mode '" + text + "'");
}

std::size_t fused_channels(std::size_t a_channels, std::size_t b_channels, FusionMode mode) {
  return mode == FusionMode::Concat ? a_channels + b_channels : a_channels;
}

Tensor3 fuse(const Tensor3& a, const Tensor3& b, FusionMode mode) {
  require(a.height == b.height && a.width == b.width, ErrorKind::InvalidInput,
          "fuse: spatial shapes differ");
  if (mode == FusionMode::Concat) {
    Tensor3 out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
  }
  require(a.channels == b.channels, ErrorKind::InvalidInput,
          "fuse: average fusion needs equal channel counts");
  Tensor3 out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = 0.5 * (a.data[i] + b.data[i]);
  return out;
}

FuseGrads fuse_backward(const Tensor3& grad_fused, std::size_t a_channels, FusionMode mode) {
  const std::size_t h = grad_fused.height, w = grad_fused.width;
  if (mode == FusionMode::Concat) {
    require(grad_fused.channels > a_channels, ErrorKind::InvalidInput, "fuse_backward: bad split");
    FuseGrads g{Tensor3(a_channels, h, w), Tensor3(grad_fused.channels - a_channels, h, w)};
    const auto split = grad_fused.data.begin() + static_cast<std::ptrdiff_t>(g.a.data.size());
    std::copy(grad_fused.data.begin(), split, g.a.data.begin());
    std::copy(split, grad_fused.data.end(), g.b.data.begin());
    return g;
  }
  FuseGrads g{grad_fused, grad_fused};
  for (double& v : g.a.data) v *= 0.5;
  for (double& v : g.b.data) v *= 0.5;
  return g;
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Thermal: return "thermal";
    case Modality::Rgbt4: return "rgbt4";
  }
  return "?";
}

std::string to_string(FirstInput f) {
  switch (f) {
    case FirstInput::Rgb: return "rgb";
    case FirstInput::Thermal: return "thermal";
    case FirstInput::Rgbt4: return "rgbt4";
  }
  return "?";
}

std::string to_string(LossNorm n) { return n == LossNorm::L1 ? "l1" : "mse"; }

FirstInput parse_first_input(const std::string& text) {
  if (text == "rgb") return FirstInput::Rgb;
  if (text == "thermal") return FirstInput::Thermal;
  if (text == "rgbt4") return FirstInput::Rgbt4;
  fail(ErrorKind::InvalidConfig, "unknown first input '" + text + "'");
}

LossNorm parse_loss_norm(const std::string& text) {
  if (text == "l1") return LossNorm::L1;
  if (text == "mse") return LossNorm::Mse;
  fail(ErrorKind::InvalidConfig, "unknown loss norm '" + text + "'");
}

void ModelConfig::validate() const {
  require(branches == 2 || branches == 3, ErrorKind::InvalidConfig, "branches must be 2 or 3");
  require(sequence_length == 2 || sequence_length == 3, ErrorKind::InvalidConfig,
          "sequence_length must be 2 or 3");
  require(feature_channels >= 1, ErrorKind::InvalidConfig, "feature_channels must be >= 1");
  require(input_size >= 4, ErrorKind::InvalidConfig, "input_size must be >= 4");
}

namespace {

std::uint64_t modality_salt(Modality m) {
  switch (m) {
    case Modality::Rgb: return 0x9e3779b97f4a7c15ULL;
    case Modality::Thermal: return 0xbf58476d1ce4e5b9ULL;
    case Modality::Rgbt4: return 0x94d049bb133111ebULL;
  }
  return 0;
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void glorot(ConvKernel& k, std::mt19937_64& rng) {
  const double area = static_cast<double>(k.size * k.size);
  const double limit =
      std::sqrt(6.0 / (static_cast<double>(k.in_channels) * area + static_cast<double>(k.out_channels) * area));
  for (double& v : k.weights) v = (2.0 * unit_uniform(rng) - 1.0) * limit;
}

void append(std::vector<double>& out, const ConvKernel& k) {
  out.insert(out.end(), k.weights.begin(), k.weights.end());
  out.insert(out.end(), k.bias.begin(), k.bias.end());
}

void take(std::span<const double>& in, ConvKernel& k) {
  require(in.size() >= k.weights.size() + k.bias.size(), ErrorKind::InvalidInput,
          "unflatten: vector too short");
  std::copy_n(in.begin(), k.weights.size(), k.weights.begin());
  in = in.subspan(k.weights.size());
  std::copy_n(in.begin(), k.bias.size(), k.bias.begin());
  in = in.subspan(k.bias.size());
}

void add_scaled(ConvKernel& into, const ConvKernel& from, double scale) {
  for (std::size_t i = 0; i < into.weights.size(); ++i) into.weights[i] += scale * from.weights[i];
  for (std::size_t i = 0; i < into.bias.size(); ++i) into.bias[i] += scale * from.bias[i];
}

FeatureExtractorParams zero_extractor(const FeatureExtractorParams& p) {
  FeatureExtractorParams z = p;
  std::fill(z.conv1.weights.begin(), z.conv1.weights.end(), 0.0);
  std::fill(z.conv1.bias.begin(), z.conv1.bias.end(), 0.0);
  std::fill(z.conv2.weights.begin(), z.conv2.weights.end(), 0.0);
  std::fill(z.conv2.bias.begin(), z.conv2.bias.end(), 0.0);
  return z;
}

template <typename Fn>
void for_each_extractor(ModelParams& p, Fn fn) {
  fn(p.rgb);
  if (p.thermal) fn(*p.thermal);
  if (p.rgbt4) fn(*p.rgbt4);
}

template <typename Fn>
void for_each_extractor(const ModelParams& p, Fn fn) {
  fn(p.rgb);
  if (p.thermal) fn(*p.thermal);
  if (p.rgbt4) fn(*p.rgbt4);
}

void mean_subtract(Tensor3& t) {
  for (std::size_t c = 0; c < t.channels; ++c) {
    auto ch = t.channel(c);
    double mean = 0.0;
    for (double v : ch) mean += v;
    mean /= static_cast<double>(ch.size());
    for (double& v : ch) v -= mean;
  }
}

}  // namespace

FeatureExtractorParams init_params(std::uint64_t seed, Modality modality, std::size_t in_channels,
                                   std::size_t feature_channels) {
  require(in_channels == 3 || in_channels == 4, ErrorKind::InvalidInput,
          "init_params: in_channels must be 3 or 4, got " + std::to_string(in_channels));
  require(feature_channels >= 1, ErrorKind::InvalidInput, "init_params: no feature channels");
  std::mt19937_64 rng(seed ^ modality_salt(modality));
  FeatureExtractorParams p;
  p.modality = modality;
  p.conv1 = ConvKernel(feature_channels, in_channels, 3);
  p.conv2 = ConvKernel(feature_channels, feature_channels, 3);
  glorot(p.conv1, rng);
  glorot(p.conv2, rng);
  return p;
}

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams m;
  m.rgb = init_params(seed, Modality::Rgb, 3, cfg.feature_channels);
  if (!cfg.share_weights) m.thermal = init_params(seed, Modality::Thermal, 3, cfg.feature_channels);
  if (cfg.branches == 2 && cfg.first_input == FirstInput::Rgbt4)
    m.rgbt4 = init_params(seed, Modality::Rgbt4, 4, cfg.feature_channels);
  return m;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.rgb = zero_extractor(p.rgb);
  if (p.thermal) z.thermal = zero_extractor(*p.thermal);
  if (p.rgbt4) z.rgbt4 = zero_extractor(*p.rgbt4);
  return z;
}

std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_extractor(p, [&](const FeatureExtractorParams& e) {
    n += e.conv1.weights.size() + e.conv1.bias.size() + e.conv2.weights.size() + e.conv2.bias.size();
  });
  return n;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  out.reserve(param_count(p));
  for_each_extractor(p, [&](const FeatureExtractorParams& e) {
    append(out, e.conv1);
    append(out, e.conv2);
  });
  return out;
}

void unflatten(std::span<const double> flat, ModelParams& p) {
  require(flat.size() == param_count(p), ErrorKind::InvalidInput, "unflatten: size mismatch");
  for_each_extractor(p, [&](FeatureExtractorParams& e) {
    take(flat, e.conv1);
    take(flat, e.conv2);
  });
}

void accumulate(ModelParams& into, const ModelParams& from, double scale) {
  require(into.thermal.has_value() == from.thermal.has_value() &&
              into.rgbt4.has_value() == from.rgbt4.has_value(),
          ErrorKind::InvalidInput, "accumulate: model layouts differ");
  add_scaled(into.rgb.conv1, from.rgb.conv1, scale);
  add_scaled(into.rgb.conv2, from.rgb.conv2, scale);
  if (into.thermal) {
    add_scaled(into.thermal->conv1, from.thermal->conv1, scale);
    add_scaled(into.thermal->conv2, from.thermal->conv2, scale);
  }
  if (into.rgbt4) {
    add_scaled(into.rgbt4->conv1, from.rgbt4->conv1, scale);
    add_scaled(into.rgbt4->conv2, from.rgbt4->conv2, scale);
  }
}

void accumulate(FeatureExtractorParams& into, const ExtractorGrads& g, double scale) {
  add_scaled(into.conv1, g.conv1, scale);
  add_scaled(into.conv2, g.conv2, scale);
}

RealPlane hann_window(std::size_t height, std::size_t width) {
  auto taper = [](std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) /
                                  static_cast<double>(n + 1));
    return w;
  };
  const auto wr = taper(height), wc = taper(width);
  RealPlane out(height, width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = wr[r] * wc[c];
  return out;
}

Tensor3 to_network_input(const Patch& patch, Modality modality) {
  require(!patch.empty(), ErrorKind::InvalidInput, "to_network_input: empty patch");
  Tensor3 t;
  if (modality == Modality::Thermal) {
    require(patch.channels == 1 || patch.channels == 3, ErrorKind::InvalidInput,
            "thermal patch must have 1 or 3 channels");
    t = Tensor3(3, patch.height, patch.width);
    const std::size_t n = patch.height * patch.width;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = patch.channels == 1 ? 0 : c;
      for (std::size_t i = 0; i < n; ++i) t.data[c * n + i] = patch.data[src * n + i];
    }
  } else {
    require(patch.channels == 3, ErrorKind::InvalidInput, "RGB patch must have 3 channels");
    t = Tensor3(3, patch.height, patch.width);
    for (std::size_t i = 0; i < patch.data.size(); ++i) t.data[i] = patch.data[i];
  }
  mean_subtract(t);
  return t;
}

Tensor3 to_network_input(const Patch& rgb, const Patch& thermal) {
  require(rgb.channels == 3 && thermal.channels >= 1 && rgb.height == thermal.height &&
              rgb.width == thermal.width,
          ErrorKind::InvalidInput, "4-channel input needs aligned RGB and thermal patches");
  const std::size_t n = rgb.height * rgb.width;
  Tensor3 t(4, rgb.height, rgb.width);
  for (std::size_t i = 0; i < 3 * n; ++i) t.data[i] = rgb.data[i];
  for (std::size_t i = 0; i < n; ++i) t.data[3 * n + i] = thermal.data[i];
  mean_subtract(t);
  return t;
}

Tensor3 extract_features(const Tensor3& input, const FeatureExtractorParams& params,
                         const ExtractOptions& opt, FeatureTape* tape) {
  require(input.height == opt.input_size && input.width == opt.input_size, ErrorKind::InvalidInput,
          "extract_features: expected " + std::to_string(opt.input_size) + "x" +
              std::to_string(opt.input_size) + " input, got " + std::to_string(input.height) +
              "x" + std::to_string(input.width));
  Tensor3 pre = conv2d_forward(input, params.conv1, 1);
  Tensor3 act = relu_forward(pre);
  Tensor3 out = conv2d_forward(act, params.conv2, 1);
  if (opt.window) {
    const RealPlane win = hann_window(out.height, out.width);
    for (std::size_t c = 0; c < out.channels; ++c) {
      auto ch = out.channel(c);
      for (std::size_t i = 0; i < ch.size(); ++i) ch[i] *= win.data[i];
    }
  }
  if (tape) {
    tape->input = input;
    tape->pre_activation = std::move(pre);
    tape->activation = std::move(act);
    tape->windowed = opt.window;
  }
  return out;
}

ExtractorGrads extract_features_backward(const Tensor3& grad_features, const FeatureTape& tape,
                                         const FeatureExtractorParams& params) {
  require(!tape.input.data.empty(), ErrorKind::InvalidState,
          "extract_features_backward: missing forward tape");
  Tensor3 g = grad_features;
  if (tape.windowed) {
    const RealPlane win = hann_window(g.height, g.width);
    for (std::size_t c = 0; c < g.channels; ++c) {
      auto ch = g.channel(c);
      for (std::size_t i = 0; i < ch.size(); ++i) ch[i] *= win.data[i];
    }
  }
  ConvGrads g2 = conv2d_backward(g, tape.activation, params.conv2, 1, true);
  Tensor3 g_pre = relu_backward(g2.input, tape.pre_activation);
  ConvGrads g1 = conv2d_backward(g_pre, tape.input, params.conv1, 1, false);
  return {std::move(g1.kernel), std::move(g2.kernel)};
}

}  // namespace xic
