#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srood/dataset.hpp"
#include "srood/image.hpp"
#include "srood/net.hpp"

namespace srood {

/// Architecture of the repair network.  The encoder is a stack of stride-2
/// 3x3 convs (leaky ReLU) followed by a linear map to the latent; the
/// decoder mirrors it with a linear map, leaky ReLU, and stride-2 3x3
/// transposed convs ending in a sigmoid.  Both stacks must have the same
/// depth and the resolution must divide by 2^depth.
struct RepairerConfig {
  int height = 32;
  int width = 32;
  int channels = 1;
  std::vector<int> encoder_widths = {16, 32};
  int latent_dim = 32;
  std::vector<int> decoder_widths = {32, 16};
  double mix_alpha = 0.3;

  void validate() const;
  int stages() const { return static_cast<int>(encoder_widths.size()); }
  int bottleneck_h() const { return height >> stages(); }
  int bottleneck_w() const { return width >> stages(); }
};

struct RepairerModel {
  RepairerConfig config;
  std::vector<Conv2d> enc;
  Dense enc_fc;
  Dense dec_fc;
  std::vector<Deconv2d> dec;
  /// Mean latent code of the training distribution; zero until
  /// update_latent_mean runs.  Values live on the binary32 grid.
  std::vector<double> latent_mean;
};

/// Gradient buffers parallel to the trainable tensors of a RepairerModel.
struct RepairerGrads {
  std::vector<Tensor> enc_w, enc_b;
  Tensor enc_fc_w, enc_fc_b, dec_fc_w, dec_fc_b;
  std::vector<Tensor> dec_w, dec_b;

  static RepairerGrads zeros_like(const RepairerModel& m);
  void clear();
};

/// Walks the trainable tensors in a fixed order with stable names
/// ("enc0.w", "enc0.b", ..., "enc_fc.w", ..., "dec0.w", ...).  Checkpoints,
/// the optimizer, and gradient containers all follow this order.
void for_each_param(RepairerModel& m,
                    const std::function<void(const std::string&, Tensor&)>& f);
void for_each_param(
    const RepairerModel& m,
    const std::function<void(const std::string&, const Tensor&)>& f);
void for_each_grad(RepairerGrads& g,
                   const std::function<void(const std::string&, Tensor&)>& f);

/// Fresh model with fan-in-scaled weights drawn from the weight-init stream
/// of `seed`; biases and latent_mean start at zero.
RepairerModel init_repairer(const RepairerConfig& cfg, std::uint64_t seed);

/// Forward activations kept for the backward pass.
struct RepairTape {
  Image input;
  std::vector<std::vector<double>> enc_pre;   // per conv, pre-activation
  std::vector<std::vector<double>> enc_post;  // per conv, post-activation
  std::vector<double> z;                      // encoder output
  std::vector<double> z_mixed;
  std::vector<double> dec_fc_pre;
  std::vector<double> dec_fc_post;
  std::vector<std::vector<double>> dec_pre;   // per deconv, pre-activation
  std::vector<std::vector<double>> dec_post;  // per deconv, post-activation
  Image output;
};

std::vector<double> encode(const RepairerModel& m, const Image& im);
Image decode(const RepairerModel& m, const std::vector<double>& z);

/// z' = (1 - alpha) z + alpha latent_mean.
std::vector<double> style_mix(const RepairerModel& m,
                              const std::vector<double>& z);

/// decode(style_mix(encode(x))).  The tape-returning variant records every
/// activation needed by repair_backward.
Image repair(const RepairerModel& m, const Image& eroded);
RepairTape repair_forward(const RepairerModel& m, const Image& eroded);

/// Accumulates d(loss)/d(params) into `g` given d(loss)/d(output pixels).
void repair_backward(const RepairerModel& m, const RepairTape& tape,
                     const std::vector<double>& dout, RepairerGrads& g);

/// Recomputes latent_mean as the mean of encode(x) over the train split in
/// manifest order, rounded to the binary32 grid.
void update_latent_mean(RepairerModel& m, const DatasetManifest& manifest);

}  // namespace srood
