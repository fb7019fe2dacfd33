#pragma once

#include <cstdint>
#include <vector>

#include "srood/dataset.hpp"
#include "srood/erosion.hpp"
#include "srood/image.hpp"
#include "srood/net.hpp"
#include "srood/repairer.hpp"

namespace srood {

/// Architecture of the frozen perceptual extractor: a stack of stride-2 3x3
/// convs with leaky ReLU.  `taps` are the layers whose activations form the
/// perceptual representation; tap 0 is the raw input, tap k the output of
/// stage k.  Empty `widths` with taps {0} describes the identity extractor
/// (pixel space).
struct PhiConfig {
  int height = 32;
  int width = 32;
  int channels = 1;
  std::vector<int> widths = {16, 32};
  std::vector<int> taps = {1, 2};

  void validate() const;
};

struct PerceptualExtractor {
  PhiConfig config;
  std::vector<Conv2d> convs;
};

/// One tapped activation map, channel-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;
};

/// Builds an extractor with fan-in-scaled random weights (weight-init
/// stream of `seed`).  fit_phi starts from this.
PerceptualExtractor init_phi(const PhiConfig& cfg, std::uint64_t seed);

/// Tapped feature maps of `im`, each unit-normalized across channels at
/// every spatial position (zero vectors stay zero).
std::vector<FeatureMap> extract_features(const PerceptualExtractor& phi,
                                         const Image& im);

/// Mean squared pixel difference over all positions and channels.  Images
/// must have identical shape.  This deviates from a plain summed squared
/// error only by the constant 1/(C*H*W), which makes values comparable
/// across resolutions.
double l2_loss(const Image& a, const Image& b);

/// Perceptual distance: mean over tap layers of the mean-over-positions
/// squared distance between unit-normalized feature vectors.  Zero for
/// identical inputs, symmetric in its arguments, and strictly positive for
/// images whose tapped features differ.
double lpips_distance(const PerceptualExtractor& phi, const Image& a,
                      const Image& b);

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.8;

  void validate() const;
};

struct LossParts {
  double total = 0.0;
  double l2 = 0.0;
  double lpips = 0.0;
};

/// Training objective for one sample:
///   lambda1 * l2(repair(T(x)), x) + lambda2 * lpips(repair(T(x)), x).
LossParts total_loss(const RepairerModel& model, const PerceptualExtractor& phi,
                     const ErosionOp& op, const Image& x,
                     const LossWeights& w);

/// Same value, and accumulates d(total)/d(theta) into `g`.
LossParts total_loss_grad(const RepairerModel& model,
                          const PerceptualExtractor& phi, const ErosionOp& op,
                          const Image& x, const LossWeights& w,
                          RepairerGrads& g);

struct PhiFitConfig {
  PhiConfig arch;
  int n_iter = 400;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

struct PhiFitResult {
  PerceptualExtractor phi;
  std::vector<double> loss_trace;  // mean reconstruction loss per iteration
};

/// Fits the extractor trunk by self-supervised reconstruction on the train
/// split: a mirrored transposed-conv decoder is attached, the composite is
/// trained to reproduce its input, then the decoder is discarded and the
/// trunk frozen.  The identity architecture returns immediately with an
/// empty trace.
PhiFitResult fit_phi(const DatasetManifest& manifest, const PhiFitConfig& cfg);

// Internals shared with the training module: forward pass with
// activations, and backward-to-input for a frozen extractor.
struct PhiTape {
  std::vector<std::vector<double>> pre;    // per stage
  std::vector<std::vector<double>> post;   // per stage
  std::vector<FeatureMap> feat;            // normalized taps
  std::vector<std::vector<double>> norms;  // per tap, per position
};

PhiTape phi_forward(const PerceptualExtractor& phi, const Image& im);

/// Propagates gradients w.r.t. the normalized tap features back to the
/// input image (weights stay frozen).  `dfeat` is parallel to tape.feat.
std::vector<double> phi_backward_to_input(
    const PerceptualExtractor& phi, const Image& input, const PhiTape& tape,
    const std::vector<std::vector<double>>& dfeat);

}  // namespace srood
