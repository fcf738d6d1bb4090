#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "xic/numkit.hpp"

using namespace xic;

TEST_CASE("dft2 of a delta is flat") {
  RealPlane p(4, 4);
  p(0, 0) = 1.0;
  const ComplexPlane X = dft2(p);
  for (const cplx& v : X.data) {
    CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(v.imag()) < 1e-15);
  }
}

TEST_CASE("dft2 of a constant has only a DC bin") {
  const double c = 0.37;
  const ComplexPlane X = dft2(RealPlane(4, 4, c));
  CHECK(std::abs(X(0, 0) - cplx(16.0 * c, 0.0)) < 1e-14);
  for (std::size_t i = 1; i < X.size(); ++i) CHECK(std::abs(X.data[i]) < 1e-14);
}

TEST_CASE("dft2 matches the direct double sum") {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 7}, {8, 8}, {1, 6}, {9, 4}}) {
    const RealPlane x = xt::random_plane(h, w);
    const ComplexPlane fast = dft2(x);
    const ComplexPlane slow = xt::direct_dft(x);
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(std::abs(fast.data[i] - slow.data[i]) < 1e-10);
  }
}

TEST_CASE("dft2 of real input is conjugate symmetric") {
  const RealPlane x = xt::random_plane(6, 5);
  const ComplexPlane X = dft2(x);
  for (std::size_t u = 0; u < 6; ++u)
    for (std::size_t v = 0; v < 5; ++v)
      CHECK(std::abs(X(u, v) - std::conj(X((6 - u) % 6, (5 - v) % 5))) < 1e-12);
}

TEST_CASE("idft2 inverts dft2 and reports a tiny residue") {
  const RealPlane x = xt::random_plane(4, 4);
  const InverseResult back = idft2_with_residue(dft2(x));
  CHECK(xt::max_abs_diff(back.real.data, x.data) < 1e-10);
  double norm = 0.0;
  for (double v : x.data) norm += v * v;
  CHECK(back.max_imag < 1e-6 * std::sqrt(norm));
}

TEST_CASE("idft2 of a zero spectrum is zero") {
  const RealPlane out = idft2(ComplexPlane(3, 5));
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("idft2 of a single-frequency pair is the analytic cosine") {
  const std::size_t H = 6, W = 8, u = 1, v = 3;
  const double amp = 2.5;
  ComplexPlane X(H, W);
  // A cosine of amplitude a puts a*H*W/2 into bin (u,v) and its mirror.
  X(u, v) = cplx(amp * H * W / 2.0, 0.0);
  X(H - u, W - v) = cplx(amp * H * W / 2.0, 0.0);
  const RealPlane x = idft2(X);
  const RealPlane oracle = xt::direct_idft(X);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      const double expect = amp * std::cos(2.0 * M_PI * (double(u * r) / H + double(v * c) / W));
      CHECK(x(r, c) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(oracle(r, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("dft2 rejects non-finite and empty input") {
  RealPlane p(2, 2);
  p(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dft2(p), Error);
  CHECK_THROWS_AS(dft2(RealPlane()), Error);
  CHECK_THROWS_AS(idft2(ComplexPlane()), Error);
}

TEST_CASE("Parseval and roundtrip on random planes") {
  for (int trial = 0; trial < 5; ++trial) {
    const RealPlane x = xt::random_plane(7, 6);
    const ComplexPlane X = dft2(x);
    double space = 0.0, freq = 0.0;
    for (double v : x.data) space += v * v;
    for (const cplx& v : X.data) freq += std::norm(v);
    CHECK(freq / 42.0 == doctest::Approx(space).epsilon(1e-9));
    const RealPlane back = idft2(X);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(back.data[i] == doctest::Approx(x.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("batched transforms agree with single-plane ones") {
  const Tensor3 t = xt::random_tensor(3, 5, 6);
  std::vector<cplx> spec(t.data.size());
  dft2_many(t.data.data(), spec.data(), 3, 5, 6);
  for (std::size_t c = 0; c < 3; ++c) {
    RealPlane p(5, 6);
    std::copy(t.channel(c).begin(), t.channel(c).end(), p.data.begin());
    const ComplexPlane X = dft2(p);
    for (std::size_t i = 0; i < 30; ++i) CHECK(std::abs(X.data[i] - spec[c * 30 + i]) < 1e-12);
  }
  std::vector<double> back(t.data.size());
  idft2_many_unnormalized(spec.data(), back.data(), 3, 5, 6);
  for (std::size_t i = 0; i < back.size(); ++i)
    CHECK(back[i] / 30.0 == doctest::Approx(t.data[i]).epsilon(1e-12));
}

TEST_CASE("conv2d with a delta kernel is the identity") {
  const Tensor3 x = xt::random_tensor(1, 6, 5);
  ConvKernel k(1, 1, 3);
  k.w(0, 0, 1, 1) = 1.0;
  CHECK(xt::max_abs_diff(conv2d_forward(x, k).data, x.data) == 0.0);
}

TEST_CASE("conv2d with an all-ones kernel counts the padded neighborhood") {
  const Tensor3 x(1, 5, 5, 1.0);
  ConvKernel k(1, 1, 3);
  std::fill(k.weights.begin(), k.weights.end(), 1.0);
  const Tensor3 y = conv2d_forward(x, k);
  CHECK(y.at(0, 2, 2) == 9.0);
  CHECK(y.at(0, 0, 2) == 6.0);
  CHECK(y.at(0, 0, 0) == 4.0);
  CHECK(xt::max_abs_diff(y.data, xt::direct_conv(x, k).data) == 0.0);
}

TEST_CASE("conv2d with a zero kernel emits the bias") {
  const Tensor3 x = xt::random_tensor(2, 4, 4);
  ConvKernel k(3, 2, 3);
  k.bias = {0.5, -1.0, 2.0};
  const Tensor3 y = conv2d_forward(x, k);
  for (std::size_t o = 0; o < 3; ++o)
    for (double v : y.channel(o)) CHECK(v == k.bias[o]);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  for (auto [c, o, h, w] : {std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>{3, 4, 7, 9},
                            {1, 1, 3, 3}, {5, 2, 12, 4}}) {
    const Tensor3 x = xt::random_tensor(c, h, w);
    ConvKernel k(o, c, 3);
    for (double& v : k.weights) v = xt::uniform();
    for (double& v : k.bias) v = xt::uniform();
    CHECK(xt::max_abs_diff(conv2d_forward(x, k).data, xt::direct_conv(x, k).data) < 1e-12);
  }
}

TEST_CASE("conv2d rejects a channel mismatch") {
  CHECK_THROWS_AS(conv2d_forward(Tensor3(2, 4, 4), ConvKernel(1, 3, 3)), Error);
}

namespace {

ConvKernel random_kernel(std::size_t o, std::size_t i) {
  ConvKernel k(o, i, 3);
  for (double& v : k.weights) v = xt::uniform();
  for (double& v : k.bias) v = xt::uniform();
  return k;
}

double weighted_sum(const Tensor3& y, const Tensor3& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
  return s;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), 1e-8}));
  return worst;
}

}  // namespace

TEST_CASE("conv2d_backward with zero upstream is zero") {
  const Tensor3 x = xt::random_tensor(2, 5, 5);
  const ConvKernel k = random_kernel(3, 2);
  const ConvGrads g = conv2d_backward(Tensor3(3, 5, 5), x, k);
  for (double v : g.input.data) CHECK(v == 0.0);
  for (double v : g.kernel.weights) CHECK(v == 0.0);
  for (double v : g.kernel.bias) CHECK(v == 0.0);
}

TEST_CASE("conv2d_backward matches central differences") {
  for (auto [c, o, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 4}, {2, 3, 6}, {3, 2, 8}}) {
    Tensor3 x = xt::random_tensor(c, n, n);
    ConvKernel k = random_kernel(o, c);
    const Tensor3 r = xt::random_tensor(o, n, n);
    const ConvGrads g = conv2d_backward(r, x, k);

    auto in_fn = [&](std::span<const double> v) {
      Tensor3 xx = x;
      std::copy(v.begin(), v.end(), xx.data.begin());
      return weighted_sum(conv2d_forward(xx, k), r);
    };
    auto w_fn = [&](std::span<const double> v) {
      ConvKernel kk = k;
      std::copy(v.begin(), v.end(), kk.weights.begin());
      return weighted_sum(conv2d_forward(x, kk), r);
    };
    auto b_fn = [&](std::span<const double> v) {
      ConvKernel kk = k;
      std::copy(v.begin(), v.end(), kk.bias.begin());
      return weighted_sum(conv2d_forward(x, kk), r);
    };
    CHECK(rel_error(g.input.data, finite_difference_grad(in_fn, x.data, 1e-5)) < 1e-7);
    CHECK(rel_error(g.kernel.weights, finite_difference_grad(w_fn, k.weights, 1e-5)) < 1e-7);
    CHECK(rel_error(g.kernel.bias, finite_difference_grad(b_fn, k.bias, 1e-5)) < 1e-7);
  }
}

TEST_CASE("conv2d_backward is linear in the upstream gradient") {
  const Tensor3 x = xt::random_tensor(2, 5, 5);
  const ConvKernel k = random_kernel(2, 2);
  Tensor3 g1 = xt::random_tensor(2, 5, 5);
  Tensor3 g2 = g1;
  for (double& v : g2.data) v *= 2.0;
  const ConvGrads a = conv2d_backward(g1, x, k), b = conv2d_backward(g2, x, k);
  for (std::size_t i = 0; i < a.input.data.size(); ++i)
    CHECK(b.input.data[i] == doctest::Approx(2.0 * a.input.data[i]).epsilon(1e-14));
  for (std::size_t i = 0; i < a.kernel.weights.size(); ++i)
    CHECK(b.kernel.weights[i] == doctest::Approx(2.0 * a.kernel.weights[i]).epsilon(1e-14));
}

TEST_CASE("conv2d_backward rejects a mismatched upstream shape") {
  CHECK_THROWS_AS(conv2d_backward(Tensor3(1, 4, 4), Tensor3(1, 5, 5), ConvKernel(1, 1, 3)), Error);
}

TEST_CASE("relu forward and backward") {
  const Tensor3 pos(1, 2, 2, 0.5);
  CHECK(relu_forward(pos) == pos);
  const Tensor3 neg(1, 2, 2, -0.5);
  for (double v : relu_forward(neg).data) CHECK(v == 0.0);
  for (double v : relu_backward(Tensor3(1, 2, 2, 1.0), neg).data) CHECK(v == 0.0);

  Tensor3 mixed(1, 2, 2);
  mixed.data = {0.7, -0.3, -1.2, 0.4};
  const Tensor3 up = xt::random_tensor(1, 2, 2);
  const Tensor3 g = relu_backward(up, mixed);
  auto fn = [&](std::span<const double> v) {
    Tensor3 t = mixed;
    std::copy(v.begin(), v.end(), t.data.begin());
    return weighted_sum(relu_forward(t), up);
  };
  const auto num = finite_difference_grad(fn, mixed.data, 1e-6);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.data[i] == doctest::Approx(num[i]).epsilon(1e-8));
}

TEST_CASE("sgd_step arithmetic") {
  SUBCASE("zero gradient leaves parameters") {
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, v{0.0, 0.0};
    sgd_step(p, g, v, {0.1, 0.9, 0.0});
    CHECK(p == std::vector<double>{1.0, -2.0});
  }
  SUBCASE("plain step") {
    std::vector<double> p{1.0}, g{1.0}, v{0.0};
    sgd_step(p, g, v, {0.1, 0.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("weight decay alone") {
    std::vector<double> p{1.0}, g{0.0}, v{0.0};
    sgd_step(p, g, v, {1.0, 0.0, 0.1});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("no momentum, no decay is exactly p - lr g") {
    std::vector<double> p{0.3, 1.7, -4.0}, g{0.25, -3.0, 1e-3}, v(3, 0.0);
    const std::vector<double> p0 = p;
    sgd_step(p, g, v, {0.01, 0.0, 0.0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == p0[i] - 0.01 * g[i]);
  }
  SUBCASE("momentum accumulates velocity") {
    std::vector<double> p{0.0}, g{1.0}, v{0.0};
    sgd_step(p, g, v, {1.0, 0.5, 0.0});
    sgd_step(p, g, v, {1.0, 0.5, 0.0});
    CHECK(v[0] == 1.5);
    CHECK(p[0] == -2.5);
  }
  SUBCASE("non-finite gradient diverges without touching state") {
    std::vector<double> p{1.0}, g{std::numeric_limits<double>::infinity()}, v{0.0};
    try {
      sgd_step(p, g, v, {0.1, 0.9, 0.0});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TrainingDiverged);
    }
    CHECK(p[0] == 1.0);
  }
  SUBCASE("momentum 1 is rejected") {
    std::vector<double> p{1.0}, g{1.0}, v{0.0};
    CHECK_THROWS_AS(sgd_step(p, g, v, {0.1, 1.0, 0.0}), Error);
  }
}

TEST_CASE("finite_difference_grad") {
  auto sq = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
  const auto g = finite_difference_grad(sq, std::vector<double>{1.0, 2.0}, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));
  auto flat = [](std::span<const double>) { return 3.0; };
  for (double v : finite_difference_grad(flat, std::vector<double>{1.0, 2.0, 3.0}, 1e-4)) CHECK(v == 0.0);
  auto lin = [](std::span<const double> x) { return 2.5 * (x[0] + x[1] + x[2]); };
  for (double v : finite_difference_grad(lin, std::vector<double>{0.1, -0.4, 9.0}, 1e-3))
    CHECK(v == doctest::Approx(2.5).epsilon(1e-9));
}
