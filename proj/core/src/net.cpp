#include "srood/net.hpp"

#include <cmath>
#include <cstddef>

#include "srood/common.hpp"

namespace srood {

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d > 0, "tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  Tensor t;
  t.shape = std::move(shape);
  t.v.assign(n, 0.0);
  return t;
}

Conv2d Conv2d::make(int in_ch, int out_ch, int stride) {
  require(stride == 1 || stride == 2, "conv stride must be 1 or 2");
  Conv2d l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.stride = stride;
  l.w = Tensor::zeros({out_ch, in_ch, 3, 3});
  l.b = Tensor::zeros({out_ch});
  return l;
}

Deconv2d Deconv2d::make(int in_ch, int out_ch) {
  Deconv2d l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.w = Tensor::zeros({in_ch, out_ch, 3, 3});
  l.b = Tensor::zeros({out_ch});
  return l;
}

Dense Dense::make(int in_dim, int out_dim) {
  Dense l;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.w = Tensor::zeros({out_dim, in_dim});
  l.b = Tensor::zeros({out_dim});
  return l;
}

void conv2d_forward(const double* in, int h, int w, const Conv2d& l,
                    double* out) {
  const int oh = conv_out_len(h, l.stride);
  const int ow = conv_out_len(w, l.stride);
  for (int oc = 0; oc < l.out_ch; ++oc) {
    const double bias = l.b[oc];
    double* outp = out + static_cast<std::size_t>(oc) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) outp[oy * ow + ox] = bias;
    for (int ic = 0; ic < l.in_ch; ++ic) {
      const double* inp = in + static_cast<std::size_t>(ic) * h * w;
      const double* wp = &l.w.v[((static_cast<std::size_t>(oc) * l.in_ch) + ic) * 9];
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          const int y0 = oy * l.stride - 1;
          const int x0 = ox * l.stride - 1;
          for (int ky = 0; ky < 3; ++ky) {
            const int y = y0 + ky;
            if (y < 0 || y >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int x = x0 + kx;
              if (x < 0 || x >= w) continue;
              acc += inp[y * w + x] * wp[ky * 3 + kx];
            }
          }
          outp[oy * ow + ox] += acc;
        }
      }
    }
  }
}

void conv2d_backward(const double* in, int h, int w, const Conv2d& l,
                     const double* gout, double* gin, Tensor* gw, Tensor* gb) {
  const int oh = conv_out_len(h, l.stride);
  const int ow = conv_out_len(w, l.stride);
  for (int oc = 0; oc < l.out_ch; ++oc) {
    const double* goutp = gout + static_cast<std::size_t>(oc) * oh * ow;
    if (gb) {
      double acc = 0.0;
      for (int i = 0; i < oh * ow; ++i) acc += goutp[i];
      gb->v[oc] += acc;
    }
    for (int ic = 0; ic < l.in_ch; ++ic) {
      const double* inp = in + static_cast<std::size_t>(ic) * h * w;
      const std::size_t wbase = ((static_cast<std::size_t>(oc) * l.in_ch) + ic) * 9;
      const double* wp = &l.w.v[wbase];
      double* ginp = gin ? gin + static_cast<std::size_t>(ic) * h * w : nullptr;
      double* gwp = gw ? &gw->v[wbase] : nullptr;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double g = goutp[oy * ow + ox];
          const int y0 = oy * l.stride - 1;
          const int x0 = ox * l.stride - 1;
          for (int ky = 0; ky < 3; ++ky) {
            const int y = y0 + ky;
            if (y < 0 || y >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int x = x0 + kx;
              if (x < 0 || x >= w) continue;
              if (gwp) gwp[ky * 3 + kx] += g * inp[y * w + x];
              if (ginp) ginp[y * w + x] += g * wp[ky * 3 + kx];
            }
          }
        }
      }
    }
  }
}

void deconv2d_forward(const double* in, int h, int w, const Deconv2d& l,
                      double* out) {
  const int oh = 2 * h;
  const int ow = 2 * w;
  for (int oc = 0; oc < l.out_ch; ++oc) {
    const double bias = l.b[oc];
    double* outp = out + static_cast<std::size_t>(oc) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) outp[i] = bias;
  }
  for (int ic = 0; ic < l.in_ch; ++ic) {
    const double* inp = in + static_cast<std::size_t>(ic) * h * w;
    for (int oc = 0; oc < l.out_ch; ++oc) {
      const double* wp = &l.w.v[((static_cast<std::size_t>(ic) * l.out_ch) + oc) * 9];
      double* outp = out + static_cast<std::size_t>(oc) * oh * ow;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double val = inp[y * w + x];
          for (int ky = 0; ky < 3; ++ky) {
            const int p = 2 * y + ky - 1;
            if (p < 0 || p >= oh) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int q = 2 * x + kx - 1;
              if (q < 0 || q >= ow) continue;
              outp[p * ow + q] += val * wp[ky * 3 + kx];
            }
          }
        }
      }
    }
  }
}

void deconv2d_backward(const double* in, int h, int w, const Deconv2d& l,
                       const double* gout, double* gin, Tensor* gw,
                       Tensor* gb) {
  const int oh = 2 * h;
  const int ow = 2 * w;
  if (gb) {
    for (int oc = 0; oc < l.out_ch; ++oc) {
      const double* goutp = gout + static_cast<std::size_t>(oc) * oh * ow;
      double acc = 0.0;
      for (int i = 0; i < oh * ow; ++i) acc += goutp[i];
      gb->v[oc] += acc;
    }
  }
  for (int ic = 0; ic < l.in_ch; ++ic) {
    const double* inp = in + static_cast<std::size_t>(ic) * h * w;
    double* ginp = gin ? gin + static_cast<std::size_t>(ic) * h * w : nullptr;
    for (int oc = 0; oc < l.out_ch; ++oc) {
      const std::size_t wbase = ((static_cast<std::size_t>(ic) * l.out_ch) + oc) * 9;
      const double* wp = &l.w.v[wbase];
      double* gwp = gw ? &gw->v[wbase] : nullptr;
      const double* goutp = gout + static_cast<std::size_t>(oc) * oh * ow;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double val = inp[y * w + x];
          double gacc = 0.0;
          for (int ky = 0; ky < 3; ++ky) {
            const int p = 2 * y + ky - 1;
            if (p < 0 || p >= oh) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int q = 2 * x + kx - 1;
              if (q < 0 || q >= ow) continue;
              const double g = goutp[p * ow + q];
              gacc += g * wp[ky * 3 + kx];
              if (gwp) gwp[ky * 3 + kx] += g * val;
            }
          }
          if (ginp) ginp[y * w + x] += gacc;
        }
      }
    }
  }
}

void dense_forward(const double* in, const Dense& l, double* out) {
  for (int o = 0; o < l.out_dim; ++o) {
    const double* wp = &l.w.v[static_cast<std::size_t>(o) * l.in_dim];
    double acc = l.b[o];
    for (int i = 0; i < l.in_dim; ++i) acc += wp[i] * in[i];
    out[o] = acc;
  }
}

void dense_backward(const double* in, const Dense& l, const double* gout,
                    double* gin, Tensor* gw, Tensor* gb) {
  if (gin)
    for (int i = 0; i < l.in_dim; ++i) gin[i] = 0.0;
  for (int o = 0; o < l.out_dim; ++o) {
    const double g = gout[o];
    const std::size_t base = static_cast<std::size_t>(o) * l.in_dim;
    if (gb) gb->v[o] += g;
    if (gw)
      for (int i = 0; i < l.in_dim; ++i) gw->v[base + i] += g * in[i];
    if (gin)
      for (int i = 0; i < l.in_dim; ++i) gin[i] += g * l.w.v[base + i];
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void leaky_relu_forward(std::vector<double>& x) {
  for (double& v : x) v = leaky_relu(v);
}

void sigmoid_forward(std::vector<double>& x) {
  for (double& v : x) v = sigmoid(v);
}

namespace {

void fill_normal(Tensor& t, double stddev, Rng& rng) {
  for (double& v : t.v) v = to_f32_grid(stddev * rng.normal());
}

}  // namespace

double Rng::normal() {
  const double u1 = uniform_pos();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

void init_conv(Conv2d& l, Rng& rng) {
  fill_normal(l.w, std::sqrt(2.0 / (9.0 * l.in_ch)), rng);
}

void init_deconv(Deconv2d& l, Rng& rng) {
  fill_normal(l.w, std::sqrt(2.0 / (9.0 * l.in_ch)), rng);
}

void init_dense(Dense& l, Rng& rng) {
  fill_normal(l.w, std::sqrt(2.0 / l.in_dim), rng);
}

}  // namespace srood
