#pragma once

// Reference implementations and fixtures shared by the unit tests. The
// oracles here are deliberately naive so they can be read line by line.

#include <cmath>
#include <complex>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xic/dcf.hpp"
#include "xic/image.hpp"
#include "xic/numkit.hpp"

namespace xt {

using xic::cplx;

inline std::mt19937_64& rng() {
  static std::mt19937_64 r(12345);
  return r;
}

inline double uniform(double a = -1.0, double b = 1.0) {
  return std::uniform_real_distribution<double>(a, b)(rng());
}

inline xic::RealPlane random_plane(std::size_t h, std::size_t w) {
  xic::RealPlane p(h, w);
  for (double& v : p.data) v = uniform();
  return p;
}

inline xic::Tensor3 random_tensor(std::size_t c, std::size_t h, std::size_t w) {
  xic::Tensor3 t(c, h, w);
  for (double& v : t.data) v = uniform();
  return t;
}

inline xic::Image random_image(std::size_t c, std::size_t h, std::size_t w) {
  xic::Image img(c, h, w);
  for (float& v : img.data) v = static_cast<float>(uniform(0.0, 1.0));
  return img;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Direct double-sum DFT, unnormalized, exp(-i 2 pi (ur/H + vc/W)).
inline xic::ComplexPlane direct_dft(const xic::RealPlane& x) {
  xic::ComplexPlane out(x.height, x.width);
  const double H = static_cast<double>(x.height), W = static_cast<double>(x.width);
  for (std::size_t u = 0; u < x.height; ++u)
    for (std::size_t v = 0; v < x.width; ++v) {
      cplx s = 0.0;
      for (std::size_t r = 0; r < x.height; ++r)
        for (std::size_t c = 0; c < x.width; ++c) {
          const double ang = -2.0 * M_PI * (u * r / H + v * c / W);
          s += x(r, c) * cplx(std::cos(ang), std::sin(ang));
        }
      out(u, v) = s;
    }
  return out;
}

inline xic::RealPlane direct_idft(const xic::ComplexPlane& X) {
  xic::RealPlane out(X.height, X.width);
  const double H = static_cast<double>(X.height), W = static_cast<double>(X.width);
  for (std::size_t r = 0; r < X.height; ++r)
    for (std::size_t c = 0; c < X.width; ++c) {
      cplx s = 0.0;
      for (std::size_t u = 0; u < X.height; ++u)
        for (std::size_t v = 0; v < X.width; ++v) {
          const double ang = 2.0 * M_PI * (u * r / H + v * c / W);
          s += X(u, v) * cplx(std::cos(ang), std::sin(ang));
        }
      out(r, c) = s.real() / (H * W);
    }
  return out;
}

// Nested-loop zero-padded cross-correlation.
inline xic::Tensor3 direct_conv(const xic::Tensor3& x, const xic::ConvKernel& k, int pad = 1) {
  const int H = static_cast<int>(x.height), W = static_cast<int>(x.width);
  const int K = static_cast<int>(k.size);
  const int oh = H + 2 * pad - K + 1, ow = W + 2 * pad - K + 1;
  xic::Tensor3 out(k.out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow));
  for (std::size_t o = 0; o < k.out_channels; ++o)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = k.bias[o];
        for (std::size_t i = 0; i < k.in_channels; ++i)
          for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
              const int sr = r + ky - pad, sc = c + kx - pad;
              if (sr < 0 || sr >= H || sc < 0 || sc >= W) continue;
              s += k.w(o, i, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)) *
                   x.at(i, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
            }
        out.at(o, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
      }
  return out;
}

// Spatial circular cross-correlation of a filter given in the spatial domain:
// out[r,c] = sum_ch sum_{i,j} f[ch,i,j] * s[ch,(r+i) mod H,(c+j) mod W].
inline xic::RealPlane circular_correlation(const xic::Tensor3& f, const xic::Tensor3& s) {
  xic::RealPlane out(s.height, s.width);
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < s.channels; ++ch)
        for (std::size_t i = 0; i < s.height; ++i)
          for (std::size_t j = 0; j < s.width; ++j)
            acc += f.at(ch, i, j) * s.at(ch, (r + i) % s.height, (c + j) % s.width);
      out(r, c) = acc;
    }
  return out;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("xic_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace xt
