#pragma once

// Closed-form correlation filter learned in the Fourier domain, its response
// on a search feature map, the online blend, and the exact backward pass
// through the closed form.

#include <cstddef>
#include <vector>

#include "xic/fusion.hpp"
#include "xic/numkit.hpp"

namespace xic {

struct GaussianLabel {
  RealPlane map;
  double sigma = 0.0;
  std::size_t center_row = 0;
  std::size_t center_col = 0;
};

// Peak 1 at `center`, with distances measured with periodic wrap-around.
GaussianLabel gaussian_label(std::size_t height, std::size_t width, double sigma,
                             std::size_t center_row, std::size_t center_col);

// Centered at (h/2, w/2) with sigma = min(h,w) / 12.5.
GaussianLabel default_label(std::size_t height, std::size_t width);

struct CorrelationFilter {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<cplx> spectrum;  // channels x height x width
  double lambda = 0.0;

  std::size_t plane_size() const { return height * width; }
  bool same_shape(const CorrelationFilter& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct ResponseMap {
  RealPlane map;
};

// W[c,u] = X[c,u] conj(Y[u]) / (sum_c' |X[c',u]|^2 + lambda).
CorrelationFilter solve_filter(const Tensor3& features, const RealPlane& label, double lambda);
CorrelationFilter solve_filter(const Tensor3& features, const GaussianLabel& label, double lambda);

// R = idft2(sum_c conj(W[c]) * dft2(search[c])).
ResponseMap response(const CorrelationFilter& filter, const Tensor3& search_features);

ResponseMap fused_response(const CorrelationFilter& filter, const Tensor3& rgb_search,
                           const Tensor3& t_search, FusionMode fusion);

// (1 - alpha) * prev + alpha * next.
CorrelationFilter update_filter(const CorrelationFilter& prev, const CorrelationFilter& next,
                                double alpha);

// Intermediates of one solve + response, kept for the backward pass.
struct CfTape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<cplx> template_spec;
  std::vector<cplx> label_spec;
  std::vector<double> denom;
  std::vector<cplx> filter;
  std::vector<cplx> search_spec;

  bool valid() const {
    const std::size_t n = height * width * channels;
    return n > 0 && template_spec.size() == n && search_spec.size() == n &&
           filter.size() == n && label_spec.size() == height * width;
  }
};

struct CfForward {
  ResponseMap response;
  CfTape tape;
};

CfForward cf_forward(const Tensor3& template_features, const RealPlane& label, double lambda,
                     const Tensor3& search_features);

struct CfGrads {
  Tensor3 template_features;
  Tensor3 search_features;
  RealPlane label;
};

// Exact gradients of a scalar loss through the closed-form solve (including
// the channel-summed denominator) and the correlation.
CfGrads cf_backward(const RealPlane& grad_response, const CfTape& tape);

}  // namespace xic
