#include "xic/numkit.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

namespace xic {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidConfig: return "invalid config";
    case ErrorKind::InvalidState: return "invalid state";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::TrainingDiverged: return "training diverged";
    case ErrorKind::DegenerateBatch: return "degenerate batch";
  }
  return "error";
}

bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

static_assert(sizeof(cplx) == sizeof(fftw_complex));

// fftw planning is not thread-safe; execution with the new-array API is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t h, std::size_t w, int sign) {
    std::lock_guard lock(mu_);
    auto key = std::make_tuple(h, w, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    auto* a = fftw_alloc_complex(h * w);
    auto* b = fftw_alloc_complex(h * w);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), a, b, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(a);
    fftw_free(b);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void execute(fftw_plan plan, const cplx* in, cplx* out) {
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

void require_finite(std::span<const double> v, const char* what) {
  require(all_finite(v), ErrorKind::InvalidInput, std::string(what) + ": non-finite input");
}

}  // namespace

void dft2_many(const double* in, cplx* out, std::size_t count, std::size_t h, std::size_t w) {
  const std::size_t n = h * w;
  fftw_plan plan = plan_cache().get(h, w, FFTW_FORWARD);
  std::vector<cplx> packed(n), spec(n);
  // Two real planes per complex transform: z = a + i b.
  std::size_t k = 0;
  for (; k + 1 < count; k += 2) {
    const double* a = in + k * n;
    const double* b = in + (k + 1) * n;
    for (std::size_t i = 0; i < n; ++i) packed[i] = cplx(a[i], b[i]);
    execute(plan, packed.data(), spec.data());
    cplx* oa = out + k * n;
    cplx* ob = out + (k + 1) * n;
    for (std::size_t r = 0; r < h; ++r) {
      const std::size_t rn = (h - r) % h;
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t cn = (w - c) % w;
        const cplx z = spec[r * w + c];
        const cplx zm = std::conj(spec[rn * w + cn]);
        oa[r * w + c] = 0.5 * (z + zm);
        ob[r * w + c] = cplx(0.0, -0.5) * (z - zm);
      }
    }
  }
  if (k < count) {
    const double* a = in + k * n;
    for (std::size_t i = 0; i < n; ++i) packed[i] = cplx(a[i], 0.0);
    execute(plan, packed.data(), out + k * n);
  }
}

void idft2_many_unnormalized(const cplx* in, double* out, std::size_t count, std::size_t h,
                             std::size_t w) {
  const std::size_t n = h * w;
  fftw_plan plan = plan_cache().get(h, w, FFTW_BACKWARD);
  std::vector<cplx> packed(n), spatial(n);
  std::size_t k = 0;
  // Spectra of real planes are Hermitian, so A + iB inverts to a + i b.
  for (; k + 1 < count; k += 2) {
    const cplx* a = in + k * n;
    const cplx* b = in + (k + 1) * n;
    for (std::size_t i = 0; i < n; ++i) packed[i] = a[i] + cplx(0.0, 1.0) * b[i];
    execute(plan, packed.data(), spatial.data());
    double* oa = out + k * n;
    double* ob = out + (k + 1) * n;
    for (std::size_t i = 0; i < n; ++i) {
      oa[i] = spatial[i].real();
      ob[i] = spatial[i].imag();
    }
  }
  if (k < count) {
    execute(plan, in + k * n, spatial.data());
    double* oa = out + k * n;
    for (std::size_t i = 0; i < n; ++i) oa[i] = spatial[i].real();
  }
}

ComplexPlane dft2(const RealPlane& plane) {
  require(plane.height > 0 && plane.width > 0, ErrorKind::InvalidInput, "dft2: empty plane");
  require_finite(plane.data, "dft2");
  ComplexPlane out(plane.height, plane.width);
  std::vector<cplx> in(plane.size());
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = cplx(plane.data[i], 0.0);
  execute(plan_cache().get(plane.height, plane.width, FFTW_FORWARD), in.data(), out.data.data());
  return out;
}

InverseResult idft2_with_residue(const ComplexPlane& spectrum) {
  require(spectrum.height > 0 && spectrum.width > 0, ErrorKind::InvalidInput,
          "idft2: empty spectrum");
  std::vector<cplx> spatial(spectrum.size());
  execute(plan_cache().get(spectrum.height, spectrum.width, FFTW_BACKWARD),
          spectrum.data.data(), spatial.data());
  InverseResult res{RealPlane(spectrum.height, spectrum.width), 0.0};
  const double scale = 1.0 / static_cast<double>(spectrum.size());
  for (std::size_t i = 0; i < spatial.size(); ++i) {
    res.real.data[i] = spatial[i].real() * scale;
    res.max_imag = std::max(res.max_imag, std::abs(spatial[i].imag() * scale));
  }
  return res;
}

RealPlane idft2(const ComplexPlane& spectrum) { return idft2_with_residue(spectrum).real; }

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t in_c, in_h, in_w, k, pad, out_h, out_w;
};

ConvGeometry geometry(const Tensor3& input, const ConvKernel& kernel, std::size_t padding) {
  require(kernel.in_channels == input.channels, ErrorKind::InvalidInput,
          "conv2d: kernel expects " + std::to_string(kernel.in_channels) +
              " input channels, got " + std::to_string(input.channels));
  require(kernel.weights.size() ==
                  kernel.out_channels * kernel.in_channels * kernel.size * kernel.size &&
              kernel.bias.size() == kernel.out_channels,
          ErrorKind::InvalidInput, "conv2d: malformed kernel");
  require(input.height + 2 * padding >= kernel.size && input.width + 2 * padding >= kernel.size,
          ErrorKind::InvalidInput, "conv2d: input smaller than kernel");
  return {input.channels, input.height, input.width, kernel.size, padding,
          input.height + 2 * padding - kernel.size + 1, input.width + 2 * padding - kernel.size + 1};
}

// Zero-padded copy flattened per channel, with k-1 trailing zeros so every tap
// can read a contiguous run of out_h * padded_w values.
struct Padded {
  std::size_t width = 0;  // padded row length; also the stride of the flat output grid
  std::size_t span = 0;   // flat length touched by one tap
  RowMat data;
};

Padded pad_input(const Tensor3& input, const ConvGeometry& g) {
  Padded p;
  p.width = g.in_w + 2 * g.pad;
  const std::size_t plane = (g.in_h + 2 * g.pad) * p.width + g.k;
  p.span = (g.out_h - 1) * p.width + g.out_w;
  p.data = RowMat::Zero(static_cast<Eigen::Index>(g.in_c), static_cast<Eigen::Index>(plane));
  for (std::size_t c = 0; c < g.in_c; ++c)
    for (std::size_t r = 0; r < g.in_h; ++r) {
      const double* src = &input.data[(c * g.in_h + r) * g.in_w];
      double* dst = p.data.row(static_cast<Eigen::Index>(c)).data() + (r + g.pad) * p.width + g.pad;
      std::copy(src, src + g.in_w, dst);
    }
  return p;
}

// Kernel taps as separate out_c x in_c matrices, tap index ky * k + kx.
std::vector<RowMat> split_taps(const ConvKernel& kernel) {
  const std::size_t k2 = kernel.size * kernel.size;
  std::vector<RowMat> taps(k2, RowMat(static_cast<Eigen::Index>(kernel.out_channels),
                                      static_cast<Eigen::Index>(kernel.in_channels)));
  for (std::size_t o = 0; o < kernel.out_channels; ++o)
    for (std::size_t c = 0; c < kernel.in_channels; ++c)
      for (std::size_t t = 0; t < k2; ++t)
        taps[t](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c)) =
            kernel.weights[(o * kernel.in_channels + c) * k2 + t];
  return taps;
}

}  // namespace

Tensor3 conv2d_forward(const Tensor3& input, const ConvKernel& kernel, std::size_t padding) {
  const ConvGeometry g = geometry(input, kernel, padding);
  const Padded p = pad_input(input, g);
  const std::vector<RowMat> taps = split_taps(kernel);
  const auto rows = static_cast<Eigen::Index>(kernel.out_channels);
  const auto span = static_cast<Eigen::Index>(p.span);
  RowMat grid = RowMat::Zero(rows, span);
  for (std::size_t ky = 0; ky < g.k; ++ky)
    for (std::size_t kx = 0; kx < g.k; ++kx)
      grid.noalias() += taps[ky * g.k + kx] *
                        p.data.middleCols(static_cast<Eigen::Index>(ky * p.width + kx), span);
  Tensor3 out(kernel.out_channels, g.out_h, g.out_w);
  for (std::size_t o = 0; o < kernel.out_channels; ++o)
    for (std::size_t r = 0; r < g.out_h; ++r) {
      const double* src = grid.row(static_cast<Eigen::Index>(o)).data() + r * p.width;
      double* dst = &out.data[(o * g.out_h + r) * g.out_w];
      for (std::size_t c = 0; c < g.out_w; ++c) dst[c] = src[c] + kernel.bias[o];
    }
  return out;
}

ConvGrads conv2d_backward(const Tensor3& grad_out, const Tensor3& cached_input,
                          const ConvKernel& kernel, std::size_t padding, bool need_input_grad) {
  const ConvGeometry g = geometry(cached_input, kernel, padding);
  require(grad_out.channels == kernel.out_channels && grad_out.height == g.out_h &&
              grad_out.width == g.out_w,
          ErrorKind::InvalidInput, "conv2d_backward: grad_out shape does not match forward");
  const Padded p = pad_input(cached_input, g);
  const auto rows = static_cast<Eigen::Index>(kernel.out_channels);
  const auto span = static_cast<Eigen::Index>(p.span);
  const std::size_t k2 = g.k * g.k;

  // Gradient laid out on the padded-stride grid; the wrap-around columns stay zero.
  RowMat grid = RowMat::Zero(rows, span);
  ConvGrads grads;
  grads.kernel = ConvKernel(kernel.out_channels, kernel.in_channels, kernel.size);
  for (std::size_t o = 0; o < kernel.out_channels; ++o) {
    double sum = 0.0;
    for (std::size_t r = 0; r < g.out_h; ++r) {
      const double* src = &grad_out.data[(o * g.out_h + r) * g.out_w];
      double* dst = grid.row(static_cast<Eigen::Index>(o)).data() + r * p.width;
      for (std::size_t c = 0; c < g.out_w; ++c) {
        dst[c] = src[c];
        sum += src[c];
      }
    }
    grads.kernel.bias[o] = sum;
  }

  const std::vector<RowMat> taps = split_taps(kernel);
  RowMat gpad;
  if (need_input_grad) gpad = RowMat::Zero(p.data.rows(), p.data.cols());
  RowMat gtap(rows, static_cast<Eigen::Index>(g.in_c));
  for (std::size_t ky = 0; ky < g.k; ++ky)
    for (std::size_t kx = 0; kx < g.k; ++kx) {
      const auto offset = static_cast<Eigen::Index>(ky * p.width + kx);
      const std::size_t t = ky * g.k + kx;
      gtap.noalias() = grid * p.data.middleCols(offset, span).transpose();
      for (std::size_t o = 0; o < kernel.out_channels; ++o)
        for (std::size_t c = 0; c < g.in_c; ++c)
          grads.kernel.weights[(o * g.in_c + c) * k2 + t] =
              gtap(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c));
      if (need_input_grad) gpad.middleCols(offset, span).noalias() += taps[t].transpose() * grid;
    }

  if (need_input_grad) {
    grads.input = Tensor3(g.in_c, g.in_h, g.in_w);
    for (std::size_t c = 0; c < g.in_c; ++c)
      for (std::size_t r = 0; r < g.in_h; ++r) {
        const double* src =
            gpad.row(static_cast<Eigen::Index>(c)).data() + (r + g.pad) * p.width + g.pad;
        std::copy(src, src + g.in_w, &grads.input.data[(c * g.in_h + r) * g.in_w]);
      }
  }
  return grads;
}

Tensor3 relu_forward(const Tensor3& x) {
  Tensor3 out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor3 relu_backward(const Tensor3& grad_out, const Tensor3& cached_input) {
  require(grad_out.same_shape(cached_input), ErrorKind::InvalidInput,
          "relu_backward: shape mismatch");
  Tensor3 out = grad_out;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (!(cached_input.data[i] > 0.0)) out.data[i] = 0.0;
  return out;
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, const SgdOptions& opt) {
  require(params.size() == grads.size() && params.size() == velocity.size(),
          ErrorKind::InvalidInput, "sgd_step: size mismatch");
  require(opt.lr > 0.0 && opt.momentum >= 0.0 && opt.momentum < 1.0, ErrorKind::InvalidConfig,
          "sgd_step: need lr > 0 and momentum in [0,1)");
  require(all_finite(grads), ErrorKind::TrainingDiverged, "sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = opt.momentum * velocity[i] + (grads[i] + opt.weight_decay * params[i]);
    params[i] -= opt.lr * velocity[i];
  }
}

std::vector<double> finite_difference_grad(const ScalarFn& fn, std::span<const double> point,
                                           double step) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = fn(x);
    x[i] = orig - step;
    const double fm = fn(x);
    x[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace xic
