#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include <srood/net.hpp>
#include <srood/rng.hpp>

using namespace srood;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * (rng.uniform() - 0.5);
  return v;
}

// Direct 6-loop convolution: out(oc, oy, ox) = b(oc) +
// sum_{ic,ky,kx} w(oc, ic, ky, kx) * in(ic, oy*s + ky - 1, ox*s + kx - 1),
// zero outside the input.
std::vector<double> conv_oracle(const std::vector<double>& in, int h, int w,
                                const Conv2d& l) {
  const int oh = conv_out_len(h, l.stride), ow = conv_out_len(w, l.stride);
  std::vector<double> out(static_cast<std::size_t>(l.out_ch) * oh * ow, 0.0);
  for (int oc = 0; oc < l.out_ch; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = l.b[oc];
        for (int ic = 0; ic < l.in_ch; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * l.stride + ky - 1;
              const int ix = ox * l.stride + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += l.w[((static_cast<std::size_t>(oc) * l.in_ch + ic) * 3 +
                          ky) *
                             3 +
                         kx] *
                     in[(static_cast<std::size_t>(ic) * h + iy) * w + ix];
            }
        out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
      }
  return out;
}

// Gather-form transposed convolution: contributions land at
// oy = 2*iy + ky - 1, ox = 2*ix + kx - 1 on a doubled grid.
std::vector<double> deconv_oracle(const std::vector<double>& in, int h, int w,
                                  const Deconv2d& l) {
  const int oh = 2 * h, ow = 2 * w;
  std::vector<double> out(static_cast<std::size_t>(l.out_ch) * oh * ow, 0.0);
  for (int oc = 0; oc < l.out_ch; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = l.b[oc];
  for (int ic = 0; ic < l.in_ch; ++ic)
    for (int iy = 0; iy < h; ++iy)
      for (int ix = 0; ix < w; ++ix)
        for (int oc = 0; oc < l.out_ch; ++oc)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int oy = 2 * iy + ky - 1;
              const int ox = 2 * ix + kx - 1;
              if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
              out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] +=
                  l.w[((static_cast<std::size_t>(ic) * l.out_ch + oc) * 3 +
                       ky) *
                          3 +
                      kx] *
                  in[(static_cast<std::size_t>(ic) * h + iy) * w + ix];
            }
  return out;
}

void check_close_vec(const std::vector<double>& a,
                     const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst < tol);
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Central-difference check of d(loss)/d(param) for every parameter of a
/// tensor against its analytic gradient.  `loss` re-runs the forward pass.
void fd_check_tensor(Tensor& params, const Tensor& analytic,
                     const std::function<double()>& loss, double step,
                     double tol) {
  REQUIRE(params.size() == analytic.size());
  for (std::size_t i = 0; i < params.v.size(); ++i) {
    const double keep = params.v[i];
    params.v[i] = keep + step;
    const double up = loss();
    params.v[i] = keep - step;
    const double down = loss();
    params.v[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    CHECK(rel_err(analytic[i], numeric) < tol);
  }
}

}  // namespace

TEST_CASE("conv2d forward matches the direct-loop oracle") {
  Rng rng(21);
  for (const int stride : {1, 2}) {
    Conv2d l = Conv2d::make(2, 3, stride);
    init_conv(l, rng);
    for (double& b : l.b.v) b = rng.uniform() - 0.5;
    const int h = 5, w = 4;
    const std::vector<double> in = random_vec(2 * h * w, rng);
    std::vector<double> out(
        static_cast<std::size_t>(3) * conv_out_len(h, stride) *
        conv_out_len(w, stride));
    conv2d_forward(in.data(), h, w, l, out.data());
    check_close_vec(out, conv_oracle(in, h, w, l), 1e-12);
  }
}

TEST_CASE("deconv2d forward matches the gather oracle and doubles size") {
  Rng rng(22);
  Deconv2d l = Deconv2d::make(3, 2);
  init_deconv(l, rng);
  for (double& b : l.b.v) b = rng.uniform() - 0.5;
  const int h = 3, w = 5;
  const std::vector<double> in = random_vec(3 * h * w, rng);
  std::vector<double> out(static_cast<std::size_t>(2) * 2 * h * 2 * w);
  deconv2d_forward(in.data(), h, w, l, out.data());
  check_close_vec(out, deconv_oracle(in, h, w, l), 1e-12);
}

TEST_CASE("dense forward matches a hand computation") {
  Dense l = Dense::make(3, 2);
  // w row-major [out, in].
  l.w.v = {1.0, 2.0, 3.0, -1.0, 0.5, 0.0};
  l.b.v = {0.25, -0.75};
  const std::vector<double> in = {2.0, -1.0, 1.0};
  std::vector<double> out(2);
  dense_forward(in.data(), l, out.data());
  CHECK(out[0] == doctest::Approx(1.0 * 2 + 2 * -1 + 3 * 1 + 0.25));
  CHECK(out[1] == doctest::Approx(-1.0 * 2 + 0.5 * -1 + 0 * 1 - 0.75));
}

TEST_CASE("conv2d backward passes a full finite-difference check") {
  Rng rng(23);
  for (const int stride : {1, 2}) {
    Conv2d l = Conv2d::make(2, 2, stride);
    init_conv(l, rng);
    for (double& b : l.b.v) b = rng.uniform() - 0.5;
    const int h = 4, w = 5;
    std::vector<double> in = random_vec(2 * h * w, rng);
    const int oh = conv_out_len(h, stride), ow = conv_out_len(w, stride);
    const std::vector<double> proj = random_vec(2 * oh * ow, rng);

    // loss = <proj, conv(in)>, so d(loss)/d(out) = proj.
    const auto loss = [&] {
      std::vector<double> out(proj.size());
      conv2d_forward(in.data(), h, w, l, out.data());
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += proj[i] * out[i];
      return s;
    };

    Tensor gw = Tensor::zeros(l.w.shape);
    Tensor gb = Tensor::zeros(l.b.shape);
    std::vector<double> gin(in.size(), 0.0);
    conv2d_backward(in.data(), h, w, l, proj.data(), gin.data(), &gw, &gb);

    fd_check_tensor(l.w, gw, loss, 1e-5, 1e-4);
    fd_check_tensor(l.b, gb, loss, 1e-5, 1e-4);
    Tensor in_t;
    in_t.shape = {static_cast<int>(in.size())};
    in_t.v = std::move(in);
    Tensor gin_t = in_t;
    gin_t.v = gin;
    const auto loss_in = [&] {
      std::vector<double> out(proj.size());
      conv2d_forward(in_t.v.data(), h, w, l, out.data());
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += proj[i] * out[i];
      return s;
    };
    fd_check_tensor(in_t, gin_t, loss_in, 1e-5, 1e-4);
  }
}

TEST_CASE("deconv2d backward passes a full finite-difference check") {
  Rng rng(24);
  Deconv2d l = Deconv2d::make(2, 2);
  init_deconv(l, rng);
  for (double& b : l.b.v) b = rng.uniform() - 0.5;
  const int h = 3, w = 4;
  std::vector<double> in = random_vec(2 * h * w, rng);
  const std::vector<double> proj = random_vec(2 * 2 * h * 2 * w, rng);

  const auto loss = [&] {
    std::vector<double> out(proj.size());
    deconv2d_forward(in.data(), h, w, l, out.data());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += proj[i] * out[i];
    return s;
  };

  Tensor gw = Tensor::zeros(l.w.shape);
  Tensor gb = Tensor::zeros(l.b.shape);
  std::vector<double> gin(in.size(), 0.0);
  deconv2d_backward(in.data(), h, w, l, proj.data(), gin.data(), &gw, &gb);

  fd_check_tensor(l.w, gw, loss, 1e-5, 1e-4);
  fd_check_tensor(l.b, gb, loss, 1e-5, 1e-4);
  Tensor in_t;
  in_t.shape = {static_cast<int>(in.size())};
  in_t.v = in;
  Tensor gin_t = in_t;
  gin_t.v = gin;
  const auto loss_in = [&] {
    std::vector<double> out(proj.size());
    deconv2d_forward(in_t.v.data(), h, w, l, out.data());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += proj[i] * out[i];
    return s;
  };
  fd_check_tensor(in_t, gin_t, loss_in, 1e-5, 1e-4);
}

TEST_CASE("dense backward passes a full finite-difference check") {
  Rng rng(25);
  Dense l = Dense::make(6, 4);
  init_dense(l, rng);
  for (double& b : l.b.v) b = rng.uniform() - 0.5;
  std::vector<double> in = random_vec(6, rng);
  const std::vector<double> proj = random_vec(4, rng);

  const auto loss = [&] {
    std::vector<double> out(4);
    dense_forward(in.data(), l, out.data());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += proj[i] * out[i];
    return s;
  };

  Tensor gw = Tensor::zeros(l.w.shape);
  Tensor gb = Tensor::zeros(l.b.shape);
  std::vector<double> gin(in.size(), 0.0);
  dense_backward(in.data(), l, proj.data(), gin.data(), &gw, &gb);

  fd_check_tensor(l.w, gw, loss, 1e-5, 1e-4);
  fd_check_tensor(l.b, gb, loss, 1e-5, 1e-4);
}

TEST_CASE("backward accumulates rather than overwrites") {
  Rng rng(26);
  Dense l = Dense::make(3, 2);
  init_dense(l, rng);
  const std::vector<double> in = random_vec(3, rng);
  const std::vector<double> proj = random_vec(2, rng);
  Tensor gw = Tensor::zeros(l.w.shape);
  Tensor gb = Tensor::zeros(l.b.shape);
  dense_backward(in.data(), l, proj.data(), nullptr, &gw, &gb);
  const std::vector<double> once = gw.v;
  dense_backward(in.data(), l, proj.data(), nullptr, &gw, &gb);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(gw.v[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("activations and their gradients") {
  CHECK(leaky_relu(2.0) == 2.0);
  CHECK(leaky_relu(-1.0) == -0.2);
  CHECK(leaky_relu_grad(3.0) == 1.0);
  CHECK(leaky_relu_grad(-0.5) == 0.2);
  CHECK(leaky_relu_grad(0.0) == 0.2);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(100.0) == doctest::Approx(1.0));
  CHECK(sigmoid(-100.0) == doctest::Approx(0.0));
  const double post = sigmoid(0.7);
  CHECK(sigmoid_grad_from_post(post) ==
        doctest::Approx(post * (1.0 - post)));
  // Numeric check of the sigmoid slope.
  const double h = 1e-6;
  CHECK(rel_err(sigmoid_grad_from_post(sigmoid(0.3)),
                (sigmoid(0.3 + h) - sigmoid(0.3 - h)) / (2 * h)) < 1e-4);
}

TEST_CASE("weight init is seeded, fan-in scaled, and on the binary32 grid") {
  Rng a = Rng::stream(5, Rng::kWeightInit);
  Rng b = Rng::stream(5, Rng::kWeightInit);
  Conv2d l1 = Conv2d::make(8, 8, 1);
  Conv2d l2 = Conv2d::make(8, 8, 1);
  init_conv(l1, a);
  init_conv(l2, b);
  CHECK(l1.w.v == l2.w.v);
  for (const double b0 : l1.b.v) CHECK(b0 == 0.0);
  for (const double w : l1.w.v) CHECK(to_f32_grid(w) == w);

  // Empirical std close to sqrt(2 / fan_in) = sqrt(2/72).
  double sum = 0.0, sum2 = 0.0;
  for (const double w : l1.w.v) {
    sum += w;
    sum2 += w * w;
  }
  const double n = static_cast<double>(l1.w.v.size());
  const double std_emp = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  CHECK(std_emp == doctest::Approx(std::sqrt(2.0 / 72.0)).epsilon(0.15));
}

TEST_CASE("conv output length arithmetic") {
  CHECK(conv_out_len(32, 1) == 32);
  CHECK(conv_out_len(32, 2) == 16);
  CHECK(conv_out_len(5, 2) == 3);
  CHECK(conv_out_len(1, 2) == 1);
}
