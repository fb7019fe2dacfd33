#pragma once

#include <cstdint>
#include <vector>

#include "srood/rng.hpp"

namespace srood {

/// Dense n-dimensional array of doubles, row-major.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  static Tensor zeros(std::vector<int> shape);

  std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
};

/// Rounds through binary32.  Weights live on this grid so that the
/// checkpoint format (which stores binary32) reproduces a freshly
/// initialised or loaded model bit-exactly.
inline double to_f32_grid(double v) {
  return static_cast<double>(static_cast<float>(v));
}

/// 3x3 convolution, zero padding 1, stride 1 or 2.
/// Weight shape [out_ch, in_ch, 3, 3], bias [out_ch].
struct Conv2d {
  int in_ch = 0;
  int out_ch = 0;
  int stride = 1;
  Tensor w, b;

  static Conv2d make(int in_ch, int out_ch, int stride);
};

/// 3x3 transposed convolution with stride 2, padding 1, output padding 1:
/// exactly doubles spatial resolution.  Weight shape [in_ch, out_ch, 3, 3].
struct Deconv2d {
  int in_ch = 0;
  int out_ch = 0;
  Tensor w, b;

  static Deconv2d make(int in_ch, int out_ch);
};

/// Fully connected layer.  Weight shape [out_dim, in_dim].
struct Dense {
  int in_dim = 0;
  int out_dim = 0;
  Tensor w, b;

  static Dense make(int in_dim, int out_dim);
};

/// Output length of one spatial axis for a 3x3/pad-1 conv.
inline int conv_out_len(int n, int stride) { return (n - 1) / stride + 1; }

// Forward kernels.  Buffers are planar channel-major, caller-allocated.
void conv2d_forward(const double* in, int h, int w, const Conv2d& l,
                    double* out);
void deconv2d_forward(const double* in, int h, int w, const Deconv2d& l,
                      double* out);
void dense_forward(const double* in, const Dense& l, double* out);

// Backward kernels.  `gin` (nullable) receives the input gradient; `gw`/`gb`
// (nullable) are accumulated into, so a batch can sum gradients in sample
// order.  All loops have a fixed serial order; results are deterministic.
void conv2d_backward(const double* in, int h, int w, const Conv2d& l,
                     const double* gout, double* gin, Tensor* gw, Tensor* gb);
void deconv2d_backward(const double* in, int h, int w, const Deconv2d& l,
                       const double* gout, double* gin, Tensor* gw,
                       Tensor* gb);
void dense_backward(const double* in, const Dense& l, const double* gout,
                    double* gin, Tensor* gw, Tensor* gb);

/// Leaky ReLU with fixed negative slope 0.2.
inline double leaky_relu(double x) { return x > 0.0 ? x : 0.2 * x; }
/// Derivative as a function of the pre-activation (slope 0.2 at x == 0).
inline double leaky_relu_grad(double pre) { return pre > 0.0 ? 1.0 : 0.2; }

double sigmoid(double x);
/// Derivative as a function of the post-activation value.
inline double sigmoid_grad_from_post(double post) {
  return post * (1.0 - post);
}

void leaky_relu_forward(std::vector<double>& x);
void sigmoid_forward(std::vector<double>& x);

// Zero-mean fan-in-scaled weight init (std = sqrt(2 / fan_in), biases zero).
// Drawn weights are rounded to the binary32 grid.
void init_conv(Conv2d& l, Rng& rng);
void init_deconv(Deconv2d& l, Rng& rng);
void init_dense(Dense& l, Rng& rng);

}  // namespace srood
