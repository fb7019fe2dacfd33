#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <srood/erosion.hpp>
#include <srood/rng.hpp>

using namespace srood;

namespace {

// Catmull-Rom kernel (a = -0.5), written out independently of the library.
double kernel(double x) {
  x = std::abs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

// Direct (non-separable) evaluation of the same resampling contract:
// source coordinate (dst + 0.5) * in/out - 0.5, 4x4 tap window, edge
// replication, final clamp to [0, 1].
Image resize_oracle(const Image& im, int out_h, int out_w) {
  Image out = Image::zeros(out_h, out_w, im.channels);
  const double sy_scale = static_cast<double>(im.height) / out_h;
  const double sx_scale = static_cast<double>(im.width) / out_w;
  for (int c = 0; c < im.channels; ++c)
    for (int oy = 0; oy < out_h; ++oy) {
      const double sy = (oy + 0.5) * sy_scale - 0.5;
      const int ky = static_cast<int>(std::floor(sy));
      for (int ox = 0; ox < out_w; ++ox) {
        const double sx = (ox + 0.5) * sx_scale - 0.5;
        const int kx = static_cast<int>(std::floor(sx));
        double acc = 0.0;
        for (int ty = -1; ty <= 2; ++ty) {
          const double wy = kernel(sy - (ky + ty));
          const int yy = std::clamp(ky + ty, 0, im.height - 1);
          for (int tx = -1; tx <= 2; ++tx) {
            const double wx = kernel(sx - (kx + tx));
            const int xx = std::clamp(kx + tx, 0, im.width - 1);
            acc += wy * wx * im.at(c, yy, xx);
          }
        }
        out.at(c, oy, ox) = std::clamp(acc, 0.0, 1.0);
      }
    }
  return out;
}

Image random_image(int h, int w, int c, std::uint64_t seed) {
  Image im = Image::zeros(h, w, c);
  Rng rng(seed);
  for (double& p : im.pix) p = rng.uniform();
  return im;
}

void check_close(const Image& a, const Image& b, double tol) {
  REQUIRE(a.height == b.height);
  REQUIRE(a.width == b.width);
  REQUIRE(a.channels == b.channels);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.pix.size(); ++i)
    worst = std::max(worst, std::abs(a.pix[i] - b.pix[i]));
  CHECK(worst < tol);
}

}  // namespace

TEST_CASE("resize to the same resolution is bit-identical") {
  const Image im = random_image(17, 23, 3, 1);
  const Image out = bicubic_resize(im, 17, 23);
  CHECK(out.pix == im.pix);
}

TEST_CASE("constant images resize to the same constant") {
  Image im = Image::zeros(32, 32, 1);
  for (double& p : im.pix) p = 0.5;
  for (const auto& [h, w] : std::vector<std::pair<int, int>>{
           {16, 16}, {13, 29}, {64, 64}, {8, 40}}) {
    const Image out = bicubic_resize(im, h, w);
    for (const double p : out.pix) CHECK(std::abs(p - 0.5) < 1e-6);
  }
}

TEST_CASE("horizontal ramp downsample matches the direct kernel oracle") {
  Image im = Image::zeros(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) im.at(0, y, x) = x / 15.0;
  check_close(bicubic_resize(im, 8, 8), resize_oracle(im, 8, 8), 1e-6);
}

TEST_CASE("random resizes match the direct kernel oracle") {
  for (std::uint64_t seed = 2; seed < 6; ++seed) {
    const Image im = random_image(15 + static_cast<int>(seed), 21, seed % 2 ? 1 : 3, seed);
    check_close(bicubic_resize(im, 8, 8), resize_oracle(im, 8, 8), 1e-6);
    check_close(bicubic_resize(im, 33, 47), resize_oracle(im, 33, 47), 1e-6);
    check_close(bicubic_resize(im, 15, 44), resize_oracle(im, 15, 44), 1e-6);
  }
}

TEST_CASE("outputs are clamped to the pixel domain") {
  // A hard checkerboard maximizes kernel overshoot.
  Image im = Image::zeros(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) im.at(0, y, x) = (x + y) % 2 ? 1.0 : 0.0;
  for (const int s : {8, 11, 24, 32}) {
    const Image out = bicubic_resize(im, s, s);
    for (const double p : out.pix) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}
