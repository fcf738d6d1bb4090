#pragma once

// Deterministic numerical kernels shared by the correlation-filter layer,
// the feature extractors and the trainer.

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "xic/error.hpp"

namespace xic {

using cplx = std::complex<double>;

struct RealPlane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  RealPlane() = default;
  RealPlane(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), data(h * w, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * width + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * width + c]; }
  std::size_t size() const { return data.size(); }
  bool operator==(const RealPlane&) const = default;
};

struct ComplexPlane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<cplx> data;

  ComplexPlane() = default;
  ComplexPlane(std::size_t h, std::size_t w) : height(h), width(w), data(h * w) {}

  cplx& operator()(std::size_t r, std::size_t c) { return data[r * width + c]; }
  cplx operator()(std::size_t r, std::size_t c) const { return data[r * width + c]; }
  std::size_t size() const { return data.size(); }
};

// C x H x W, channel-major.
struct Tensor3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane_size() const { return height * width; }
  std::span<double> channel(std::size_t c) {
    return {data.data() + c * plane_size(), plane_size()};
  }
  std::span<const double> channel(std::size_t c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }
  double& at(std::size_t c, std::size_t r, std::size_t x) {
    return data[(c * height + r) * width + x];
  }
  double at(std::size_t c, std::size_t r, std::size_t x) const {
    return data[(c * height + r) * width + x];
  }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Tensor3&) const = default;
};

// Square kernel, weights laid out [out][in][ky][kx].
struct ConvKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t size = 3;
  std::vector<double> weights;
  std::vector<double> bias;

  ConvKernel() = default;
  ConvKernel(std::size_t out, std::size_t in, std::size_t k = 3)
      : out_channels(out), in_channels(in), size(k),
        weights(out * in * k * k, 0.0), bias(out, 0.0) {}

  double& w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return weights[((o * in_channels + i) * size + ky) * size + kx];
  }
  double w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weights[((o * in_channels + i) * size + ky) * size + kx];
  }
  bool same_shape(const ConvKernel& o) const {
    return out_channels == o.out_channels && in_channels == o.in_channels && size == o.size;
  }
  bool operator==(const ConvKernel&) const = default;
};

bool all_finite(std::span<const double> values);

// Unnormalized forward DFT.
ComplexPlane dft2(const RealPlane& plane);

// Inverse DFT with 1/(H*W) normalization; the imaginary part is dropped.
RealPlane idft2(const ComplexPlane& spectrum);

struct InverseResult {
  RealPlane real;
  // Largest |imag| over the output, before it was discarded.
  double max_imag = 0.0;
};
InverseResult idft2_with_residue(const ComplexPlane& spectrum);

// Batched transforms over `count` contiguous H x W planes. These are the
// workhorses behind the correlation-filter layer.
void dft2_many(const double* in, cplx* out, std::size_t count, std::size_t h, std::size_t w);
// Unnormalized inverse (no 1/(H*W)); `out` receives the real part.
void idft2_many_unnormalized(const cplx* in, double* out, std::size_t count, std::size_t h,
                             std::size_t w);

// Cross-correlation (no kernel flip), stride 1, zero padding.
Tensor3 conv2d_forward(const Tensor3& input, const ConvKernel& kernel, std::size_t padding = 1);

struct ConvGrads {
  Tensor3 input;  // empty when not requested
  ConvKernel kernel;
};

ConvGrads conv2d_backward(const Tensor3& grad_out, const Tensor3& cached_input,
                          const ConvKernel& kernel, std::size_t padding = 1,
                          bool need_input_grad = true);

Tensor3 relu_forward(const Tensor3& x);
Tensor3 relu_backward(const Tensor3& grad_out, const Tensor3& cached_input);

struct SgdOptions {
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-5;
};

// v <- m*v + (g + wd*p); p <- p - lr*v. Throws TrainingDiverged on a
// non-finite gradient before touching any state.
void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, const SgdOptions& opt);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences, one coordinate at a time.
std::vector<double> finite_difference_grad(const ScalarFn& fn, std::span<const double> point,
                                           double step);

}  // namespace xic
