#include "xic/dcf.hpp"

#include <algorithm>
#include <cmath>

namespace xic {

namespace {

double wrapped_distance(std::size_t a, std::size_t b, std::size_t period) {
  const std::size_t d = a > b ? a - b : b - a;
  return static_cast<double>(std::min(d, period - d));
}

void check_label(const RealPlane& label, std::size_t h, std::size_t w) {
  require(label.height == h && label.width == w, ErrorKind::InvalidInput,
          "label shape does not match feature spatial shape");
}

std::vector<cplx> spectra(const Tensor3& t) {
  std::vector<cplx> out(t.data.size());
  dft2_many(t.data.data(), out.data(), t.channels, t.height, t.width);
  return out;
}

// Returns the filter spectrum and fills denom.
std::vector<cplx> solve_spectral(const std::vector<cplx>& x, const std::vector<cplx>& y,
                                 std::size_t channels, std::size_t n, double lambda,
                                 std::vector<double>& denom) {
  denom.assign(n, lambda);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t u = 0; u < n; ++u) denom[u] += std::norm(x[c * n + u]);
  std::vector<cplx> w(channels * n);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t u = 0; u < n; ++u) w[c * n + u] = x[c * n + u] * std::conj(y[u]) / denom[u];
  return w;
}

RealPlane correlate(const std::vector<cplx>& w, const std::vector<cplx>& z, std::size_t channels,
                    std::size_t h, std::size_t wd) {
  const std::size_t n = h * wd;
  std::vector<cplx> acc(n);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t u = 0; u < n; ++u) acc[u] += std::conj(w[c * n + u]) * z[c * n + u];
  RealPlane r(h, wd);
  idft2_many_unnormalized(acc.data(), r.data.data(), 1, h, wd);
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : r.data) v *= scale;
  return r;
}

}  // namespace

GaussianLabel gaussian_label(std::size_t height, std::size_t width, double sigma,
                             std::size_t center_row, std::size_t center_col) {
  require(sigma > 0.0, ErrorKind::InvalidInput, "gaussian_label: sigma must be positive");
  require(height > 0 && width > 0, ErrorKind::InvalidInput, "gaussian_label: empty shape");
  require(center_row < height && center_col < width, ErrorKind::InvalidInput,
          "gaussian_label: center outside the plane");
  GaussianLabel label{RealPlane(height, width), sigma, center_row, center_col};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t r = 0; r < height; ++r) {
    const double dr = wrapped_distance(r, center_row, height);
    for (std::size_t c = 0; c < width; ++c) {
      const double dc = wrapped_distance(c, center_col, width);
      label.map(r, c) = std::exp(-(dr * dr + dc * dc) * inv);
    }
  }
  return label;
}

GaussianLabel default_label(std::size_t height, std::size_t width) {
  const double sigma = static_cast<double>(std::min(height, width)) / 12.5;
  return gaussian_label(height, width, sigma, height / 2, width / 2);
}

CorrelationFilter solve_filter(const Tensor3& features, const RealPlane& label, double lambda) {
  require(lambda > 0.0, ErrorKind::InvalidInput, "solve_filter: lambda must be positive");
  require(features.channels > 0, ErrorKind::InvalidInput, "solve_filter: no channels");
  require(all_finite(features.data), ErrorKind::InvalidInput, "solve_filter: non-finite features");
  check_label(label, features.height, features.width);
  const std::size_t n = features.plane_size();
  const auto x = spectra(features);
  std::vector<cplx> y(n);
  dft2_many(label.data.data(), y.data(), 1, label.height, label.width);
  std::vector<double> denom;
  CorrelationFilter f;
  f.channels = features.channels;
  f.height = features.height;
  f.width = features.width;
  f.lambda = lambda;
  f.spectrum = solve_spectral(x, y, f.channels, n, lambda, denom);
  return f;
}

CorrelationFilter solve_filter(const Tensor3& features, const GaussianLabel& label, double lambda) {
  return solve_filter(features, label.map, lambda);
}

ResponseMap response(const CorrelationFilter& filter, const Tensor3& search_features) {
  require(filter.channels == search_features.channels && filter.height == search_features.height &&
              filter.width == search_features.width,
          ErrorKind::InvalidInput, "response: filter and search feature shapes differ");
  const auto z = spectra(search_features);
  return {correlate(filter.spectrum, z, filter.channels, filter.height, filter.width)};
}

ResponseMap fused_response(const CorrelationFilter& filter, const Tensor3& rgb_search,
                           const Tensor3& t_search, FusionMode fusion) {
  const std::size_t expected = fused_channels(rgb_search.channels, t_search.channels, fusion);
  require(filter.channels == expected, ErrorKind::InvalidInput,
          "fused_response: filter has " + std::to_string(filter.channels) + " channels, " +
              to_string(fusion) + " fusion yields " + std::to_string(expected));
  return response(filter, fuse(rgb_search, t_search, fusion));
}

CorrelationFilter update_filter(const CorrelationFilter& prev, const CorrelationFilter& next,
                                double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidInput,
          "update_filter: alpha must be in [0,1]");
  require(prev.same_shape(next), ErrorKind::InvalidInput, "update_filter: shape mismatch");
  if (alpha == 0.0) return prev;
  if (alpha == 1.0) return next;
  CorrelationFilter out = prev;
  for (std::size_t i = 0; i < out.spectrum.size(); ++i)
    out.spectrum[i] = (1.0 - alpha) * prev.spectrum[i] + alpha * next.spectrum[i];
  return out;
}

CfForward cf_forward(const Tensor3& template_features, const RealPlane& label, double lambda,
                     const Tensor3& search_features) {
  require(lambda > 0.0, ErrorKind::InvalidInput, "cf_forward: lambda must be positive");
  require(template_features.same_shape(search_features), ErrorKind::InvalidInput,
          "cf_forward: template and search feature shapes differ");
  check_label(label, template_features.height, template_features.width);
  CfForward out;
  CfTape& t = out.tape;
  t.channels = template_features.channels;
  t.height = template_features.height;
  t.width = template_features.width;
  const std::size_t n = t.height * t.width;
  t.template_spec = spectra(template_features);
  t.label_spec.resize(n);
  dft2_many(label.data.data(), t.label_spec.data(), 1, t.height, t.width);
  t.filter = solve_spectral(t.template_spec, t.label_spec, t.channels, n, lambda, t.denom);
  t.search_spec = spectra(search_features);
  out.response.map = correlate(t.filter, t.search_spec, t.channels, t.height, t.width);
  return out;
}

CfGrads cf_backward(const RealPlane& grad_response, const CfTape& tape) {
  require(tape.valid(), ErrorKind::InvalidState, "cf_backward: missing forward intermediates");
  require(grad_response.height == tape.height && grad_response.width == tape.width,
          ErrorKind::InvalidInput, "cf_backward: gradient shape mismatch");
  const std::size_t n = tape.height * tape.width;
  const std::size_t ch = tape.channels;

  // Conjugate-coordinate gradient of the summed spectrum P: dft2(G) / N.
  std::vector<cplx> gp(n);
  dft2_many(grad_response.data.data(), gp.data(), 1, tape.height, tape.width);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& v : gp) v *= inv_n;

  std::vector<cplx> gz(ch * n), gx(ch * n), gy(n);
  std::vector<double> gd(n, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t i = c * n + u;
      gz[i] = gp[u] * tape.filter[i];
      const cplx gw = std::conj(gp[u]) * tape.search_spec[i];
      gd[u] -= (std::conj(gw) * tape.filter[i]).real();
      // Quotient numerator path, scaled by 1/D below.
      gx[i] = gw;
    }
  }
  for (std::size_t u = 0; u < n; ++u) gd[u] /= tape.denom[u];
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t i = c * n + u;
      const cplx ga = gx[i] / tape.denom[u];
      gy[u] += std::conj(ga) * tape.template_spec[i];
      gx[i] = ga * tape.label_spec[u] + 2.0 * gd[u] * tape.template_spec[i];
    }
  }

  CfGrads g;
  g.template_features = Tensor3(ch, tape.height, tape.width);
  g.search_features = Tensor3(ch, tape.height, tape.width);
  g.label = RealPlane(tape.height, tape.width);
  idft2_many_unnormalized(gx.data(), g.template_features.data.data(), ch, tape.height, tape.width);
  idft2_many_unnormalized(gz.data(), g.search_features.data.data(), ch, tape.height, tape.width);
  idft2_many_unnormalized(gy.data(), g.label.data.data(), 1, tape.height, tape.width);
  return g;
}

}  // namespace xic
