#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "srood/dataset.hpp"
#include "srood/erosion.hpp"
#include "srood/metrics.hpp"
#include "srood/repairer.hpp"

namespace srood {

enum class Optimizer { sgd, adaptive_moments };

Optimizer parse_optimizer(const std::string& name);
const char* optimizer_name(Optimizer o);

struct TrainConfig {
  int n_iter = 3000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adaptive_moments;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
};

/// Optimizer state carried across gradient steps.  sgd keeps only the step
/// counter; adaptive_moments additionally keeps first/second moment
/// estimates (beta1 0.9, beta2 0.999, eps 1e-8), updated from the mean
/// gradient of the batch.
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<Tensor> m1, m2;

  static OptimizerState zeros_like(const RepairerModel& m, Optimizer opt);
};

/// One parameter update from summed per-sample gradients.  sgd applies
/// exactly theta -= (learning_rate / batch_size) * grad_sum.
void gradient_step(RepairerModel& model, const RepairerGrads& grads,
                   const TrainConfig& cfg, OptimizerState& state);

struct TrainResult {
  RepairerModel model;
  std::vector<double> loss_trace;  // mean batch loss, one entry per iteration
  int start_iteration = 0;         // first iteration this call executed, minus 1
};

/// Trains the repairer: per iteration, draws a batch without replacement
/// and one erosion per sample, accumulates gradients of
///   lambda1 * ||R(T(x)) - x||^2 + lambda2 * lpips(phi(R(T(x))), phi(x))
/// in batch order, and steps the optimizer.  Finishes by re-estimating the
/// latent mean over the train split.  Aborts with the iteration number if
/// the mean loss turns non-finite.
///
/// With a non-empty `out_dir` and checkpoint_every > 0, periodic
/// checkpoints (model_iter_NNNNNN.ckpt), exact optimizer state sidecars
/// (.optstate) and the loss trace (trace.csv) land in `out_dir`; passing
/// resume = true restarts from the newest periodic checkpoint at or below
/// n_iter (fresh start when none exists) and reproduces the uninterrupted
/// run exactly.
TrainResult train_repairer(const RepairerConfig& arch,
                           const DatasetManifest& manifest,
                           const ErosionSet& erosions,
                           const PerceptualExtractor& phi,
                           const LossWeights& weights, const TrainConfig& cfg,
                           const std::filesystem::path& out_dir = {},
                           bool resume = false);

/// Writes "iteration,mean_loss" rows; values use %.17g so that reading the
/// file back reproduces the exact doubles.
void write_trace(const std::filesystem::path& path,
                 const std::vector<double>& trace);
std::vector<double> read_trace(const std::filesystem::path& path);

}  // namespace srood
