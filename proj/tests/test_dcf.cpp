#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "xic/dcf.hpp"

using namespace xic;

namespace {

// Spatial filter taps recovered from one channel of a filter spectrum.
Tensor3 spatial_filter(const CorrelationFilter& f) {
  Tensor3 out(f.channels, f.height, f.width);
  for (std::size_t c = 0; c < f.channels; ++c) {
    ComplexPlane spec(f.height, f.width);
    std::copy(f.spectrum.begin() + c * f.plane_size(), f.spectrum.begin() + (c + 1) * f.plane_size(),
              spec.data.begin());
    const RealPlane taps = idft2(spec);
    std::copy(taps.data.begin(), taps.data.end(), out.channel(c).begin());
  }
  return out;
}

double max_dev(const RealPlane& a, const RealPlane& b) {
  return xt::max_abs_diff(a.data, b.data);
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double scale = 0.0;
  for (double v : n) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - n[i]) /
                                std::max({std::abs(a[i]), std::abs(n[i]), 1e-4 * scale}));
  return worst;
}

double dot(const RealPlane& a, const RealPlane& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("gaussian label shape") {
  const GaussianLabel g = gaussian_label(9, 11, 2.0, 3, 7);
  CHECK(g.map(3, 7) == 1.0);
  CHECK(g.map((3 + 2) % 9, 7) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(g.map((3 + 2) % 9, 7) == doctest::Approx(0.60653).epsilon(1e-5));
  for (std::size_t d = 1; d < 5; ++d) {
    CHECK(g.map((3 + d) % 9, 7) == doctest::Approx(g.map((3 + 9 - d) % 9, 7)).epsilon(1e-15));
    CHECK(g.map(3, (7 + d) % 11) == doctest::Approx(g.map(3, (7 + 11 - d) % 11)).epsilon(1e-15));
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < g.map.size(); ++i) {
    CHECK(g.map.data[i] > 0.0);
    CHECK(g.map.data[i] <= 1.0);
    if (g.map.data[i] > g.map.data[best]) best = i;
  }
  CHECK(best == 3 * 11 + 7);
  CHECK_THROWS_AS(gaussian_label(4, 4, 0.0, 1, 1), Error);
  CHECK_THROWS_AS(gaussian_label(4, 4, 1.0, 4, 1), Error);
}

TEST_CASE("default label centers at half size with sigma size/12.5") {
  const GaussianLabel g = default_label(125, 125);
  CHECK(g.center_row == 62);
  CHECK(g.center_col == 62);
  CHECK(g.sigma == doctest::Approx(10.0));
}

TEST_CASE("solve_filter single-bin arithmetic") {
  // 1x1 plane: the DFT is the value itself.
  Tensor3 x(1, 1, 1, 2.0);
  RealPlane y(1, 1, 1.0);
  const CorrelationFilter f = solve_filter(x, y, 2.0);
  CHECK(std::abs(f.spectrum[0] - cplx(1.0 / 3.0, 0.0)) < 1e-15);
}

TEST_CASE("solve_filter matches per-bin scalar arithmetic") {
  const Tensor3 x = xt::random_tensor(2, 4, 4);
  const RealPlane y = xt::random_plane(4, 4);
  const double lambda = 0.3;
  const CorrelationFilter f = solve_filter(x, y, lambda);
  std::vector<ComplexPlane> X;
  for (std::size_t c = 0; c < 2; ++c) {
    RealPlane p(4, 4);
    std::copy(x.channel(c).begin(), x.channel(c).end(), p.data.begin());
    X.push_back(xt::direct_dft(p));
  }
  const ComplexPlane Y = xt::direct_dft(y);
  for (std::size_t u = 0; u < 16; ++u) {
    double den = lambda;
    for (std::size_t c = 0; c < 2; ++c) den += (std::conj(X[c].data[u]) * X[c].data[u]).real();
    for (std::size_t c = 0; c < 2; ++c) {
      const cplx expect = X[c].data[u] * std::conj(Y.data[u]) / den;
      CHECK(std::abs(f.spectrum[c * 16 + u] - expect) < 1e-12);
    }
  }
}

TEST_CASE("a dominant regularizer drives the filter to zero") {
  Tensor3 x = xt::random_tensor(3, 6, 6);
  double norm = 0.0;
  for (double v : x.data) norm += v * v;
  for (double& v : x.data) v /= std::sqrt(norm);
  const CorrelationFilter f = solve_filter(x, default_label(6, 6), 1e12);
  double mag = 0.0;
  for (const cplx& v : f.spectrum) mag += std::norm(v);
  CHECK(std::sqrt(mag) < 1e-9);
}

TEST_CASE("solve_filter rejects bad input") {
  CHECK_THROWS_AS(solve_filter(Tensor3(1, 4, 4, 1.0), RealPlane(4, 4), 0.0), Error);
  CHECK_THROWS_AS(solve_filter(Tensor3(1, 4, 4, 1.0), RealPlane(5, 4), 1.0), Error);
  Tensor3 bad(1, 2, 2, 1.0);
  bad.data[0] = std::nan("");
  CHECK_THROWS_AS(solve_filter(bad, RealPlane(2, 2), 1.0), Error);
}

TEST_CASE("response of zero search features is zero") {
  const CorrelationFilter f = solve_filter(xt::random_tensor(2, 5, 5), default_label(5, 5), 1e-2);
  for (double v : response(f, Tensor3(2, 5, 5)).map.data) CHECK(v == 0.0);
}

TEST_CASE("response equals spatial circular correlation") {
  for (std::size_t n = 1; n <= 16; n += 3)
    for (std::size_t ch : {1u, 2u, 4u}) {
      const Tensor3 x = xt::random_tensor(ch, n, n);
      const Tensor3 z = xt::random_tensor(ch, n, n);
      const RealPlane y = xt::random_plane(n, n);
      const CorrelationFilter f = solve_filter(x, y, 0.5);
      const RealPlane fast = response(f, z).map;
      const RealPlane slow = xt::circular_correlation(spatial_filter(f), z);
      CHECK(max_dev(fast, slow) < 1e-10);
    }
  // Rectangular shapes too.
  const Tensor3 x = xt::random_tensor(3, 5, 8), z = xt::random_tensor(3, 5, 8);
  const CorrelationFilter f = solve_filter(x, xt::random_plane(5, 8), 0.1);
  CHECK(max_dev(response(f, z).map, xt::circular_correlation(spatial_filter(f), z)) < 1e-10);
}

TEST_CASE("self-response approaches the label as lambda shrinks") {
  const Tensor3 x = xt::random_tensor(1, 8, 8);
  const GaussianLabel y = default_label(8, 8);
  double prev = 1e300;
  for (double lambda : {1e-1, 1e-2, 1e-4, 1e-8}) {
    const double dev = max_dev(response(solve_filter(x, y, lambda), x).map, y.map);
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("response rejects a shape mismatch") {
  const CorrelationFilter f = solve_filter(Tensor3(2, 4, 4, 1.0), default_label(4, 4), 1.0);
  CHECK_THROWS_AS(response(f, Tensor3(3, 4, 4)), Error);
  CHECK_THROWS_AS(response(f, Tensor3(2, 5, 4)), Error);
}

TEST_CASE("fused response") {
  const Tensor3 a = xt::random_tensor(2, 6, 6), b = xt::random_tensor(2, 6, 6);
  const Tensor3 sa = xt::random_tensor(2, 6, 6), sb = xt::random_tensor(2, 6, 6);
  const GaussianLabel y = default_label(6, 6);

  SUBCASE("concat needs the summed channel count") {
    const CorrelationFilter f = solve_filter(fuse(a, b, FusionMode::Concat), y, 1e-2);
    CHECK(f.channels == 4);
    CHECK(max_dev(fused_response(f, sa, sb, FusionMode::Concat).map,
                  response(f, fuse(sa, sb, FusionMode::Concat)).map) == 0.0);
    CHECK_THROWS_AS(fused_response(f, sa, sb, FusionMode::Average), Error);
  }
  SUBCASE("average of identical inputs is the plain response") {
    const CorrelationFilter f = solve_filter(a, y, 1e-2);
    CHECK(max_dev(fused_response(f, sa, sa, FusionMode::Average).map, response(f, sa).map) < 1e-15);
  }
  SUBCASE("32+32 concat gives a 64-channel filter") {
    const Tensor3 big = xt::random_tensor(32, 4, 4);
    const CorrelationFilter f = solve_filter(fuse(big, big, FusionMode::Concat), default_label(4, 4), 1.0);
    CHECK(f.channels == 64);
  }
}

TEST_CASE("update_filter blends spectra") {
  const CorrelationFilter a = solve_filter(xt::random_tensor(2, 4, 4), default_label(4, 4), 0.1);
  const CorrelationFilter b = solve_filter(xt::random_tensor(2, 4, 4), default_label(4, 4), 0.1);
  const CorrelationFilter keep = update_filter(a, b, 0.0);
  const CorrelationFilter swap = update_filter(a, b, 1.0);
  const CorrelationFilter mid = update_filter(a, b, 0.5);
  for (std::size_t i = 0; i < a.spectrum.size(); ++i) {
    CHECK(keep.spectrum[i] == a.spectrum[i]);
    CHECK(swap.spectrum[i] == b.spectrum[i]);
    CHECK(std::abs(mid.spectrum[i] - 0.5 * (a.spectrum[i] + b.spectrum[i])) < 1e-15);
    CHECK(std::abs(mid.spectrum[i]) <= std::max(std::abs(a.spectrum[i]), std::abs(b.spectrum[i])) + 1e-15);
  }
  CHECK_THROWS_AS(update_filter(a, b, 1.5), Error);
  const CorrelationFilter other = solve_filter(xt::random_tensor(1, 4, 4), default_label(4, 4), 0.1);
  CHECK_THROWS_AS(update_filter(a, other, 0.5), Error);
}

TEST_CASE("cf_forward agrees with solve_filter + response") {
  const Tensor3 x = xt::random_tensor(3, 7, 7), z = xt::random_tensor(3, 7, 7);
  const GaussianLabel y = default_label(7, 7);
  const CfForward fw = cf_forward(x, y.map, 1e-3, z);
  CHECK(max_dev(fw.response.map, response(solve_filter(x, y, 1e-3), z).map) < 1e-12);
}

TEST_CASE("cf_backward with zero upstream is zero") {
  const CfForward fw = cf_forward(xt::random_tensor(2, 4, 4), default_label(4, 4).map, 0.1,
                                  xt::random_tensor(2, 4, 4));
  const CfGrads g = cf_backward(RealPlane(4, 4), fw.tape);
  for (double v : g.template_features.data) CHECK(v == 0.0);
  for (double v : g.search_features.data) CHECK(v == 0.0);
}

TEST_CASE("cf_backward needs a forward tape") {
  CHECK_THROWS_AS(cf_backward(RealPlane(4, 4), CfTape{}), Error);
}

TEST_CASE("cf_backward matches finite differences") {
  struct Case {
    std::size_t ch, n;
    double lambda;
    bool sum_loss;
  };
  std::vector<Case> cases{{1, 6, 0.1, true}, {2, 6, 1.0, true}};
  for (std::size_t ch : {1u, 2u, 4u})
    for (std::size_t n : {4u, 6u, 8u}) cases.push_back({ch, n, 0.05, false});
  for (const Case& cs : cases) {
    CAPTURE(cs.ch);
    CAPTURE(cs.n);
    Tensor3 x = xt::random_tensor(cs.ch, cs.n, cs.n);
    Tensor3 z = xt::random_tensor(cs.ch, cs.n, cs.n);
    RealPlane y = default_label(cs.n, cs.n).map;
    const RealPlane r = cs.sum_loss ? RealPlane(cs.n, cs.n, 1.0) : xt::random_plane(cs.n, cs.n);
    const CfGrads g = cf_backward(r, cf_forward(x, y, cs.lambda, z).tape);
    auto loss = [&](const Tensor3& xx, const Tensor3& zz, const RealPlane& yy) {
      return dot(cf_forward(xx, yy, cs.lambda, zz).response.map, r);
    };
    auto tx = [&](std::span<const double> v) {
      Tensor3 t = x;
      std::copy(v.begin(), v.end(), t.data.begin());
      return loss(t, z, y);
    };
    auto tz = [&](std::span<const double> v) {
      Tensor3 t = z;
      std::copy(v.begin(), v.end(), t.data.begin());
      return loss(x, t, y);
    };
    auto ty = [&](std::span<const double> v) {
      RealPlane t = y;
      std::copy(v.begin(), v.end(), t.data.begin());
      return loss(x, z, t);
    };
    CHECK(rel_error(g.template_features.data, finite_difference_grad(tx, x.data, 1e-5)) < 1e-5);
    CHECK(rel_error(g.search_features.data, finite_difference_grad(tz, z.data, 1e-5)) < 1e-5);
    CHECK(rel_error(g.label.data, finite_difference_grad(ty, y.data, 1e-5)) < 1e-5);
  }
}
