#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "srood/metrics.hpp"
#include "srood/repairer.hpp"
#include "srood/training.hpp"

namespace srood {

/// Full experiment description, read from a flat key=value config file
/// ('#' starts a comment; keys are dotted, e.g. "train.n_iter").  Unknown
/// keys are rejected so typos cannot silently fall back to defaults.
struct ExperimentConfig {
  std::string manifest;       // dataset.manifest (required)
  std::string data_root;      // dataset.data_root (optional)
  std::string id_name = "id";   // dataset.id_name
  std::string ood_name = "ood"; // dataset.ood_name

  std::string variant = "sr";  // erosion.variant: rec | sr | inpaint

  int resolution = 32;  // model.resolution (square)
  int channels = 1;     // model.channels
  std::vector<int> encoder_widths = {16, 32};
  int latent_dim = 32;
  std::vector<int> decoder_widths = {32, 16};
  double mix_alpha = 0.3;

  std::vector<int> phi_widths = {16, 32};
  std::vector<int> phi_taps = {1, 2};
  int phi_n_iter = 400;
  int phi_batch_size = 32;
  double phi_learning_rate = 2e-3;

  LossWeights loss;

  TrainConfig train;

  std::string threshold_method = "id-quantile";  // or "fixed"
  double threshold_quantile = 0.95;
  double threshold_epsilon = 0.0;  // used by the fixed method

  std::uint64_t seed = 0;
  std::string out = "run";

  std::string paths_phi;    // paths.phi (default <out>/phi.ckpt)
  std::string paths_model;  // paths.model (default <out>/model.ckpt)

  bool baselines_enabled = false;
  int baselines_n_iter = 300;
  int baselines_batch_size = 32;
  double baselines_learning_rate = 1e-2;

  int diagnostics_max_samples = 64;
  int report_grid_samples = 8;

  RepairerConfig repairer_config() const;
  PhiConfig phi_config() const;

  std::filesystem::path phi_checkpoint_path() const;
  std::filesystem::path model_checkpoint_path() const;

  void validate() const;
};

/// Parses and validates a config file.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical sorted key=value rendering of every effective setting.  Equal
/// configurations produce identical bytes; this is what config_resolved.txt
/// holds and what the config hash covers.
std::string resolved_text(const ExperimentConfig& cfg);

/// FNV-1a 64-bit hash, printed as 16 hex digits.
std::uint64_t fnv1a64(const std::string& data);
std::string config_hash_hex(const ExperimentConfig& cfg);

/// Generic "key = value" file helpers used for the small artifact files
/// (tstar.txt, threshold.txt, diagnostics.txt).
void write_kv_file(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& kv);
std::map<std::string, std::string> read_kv_file(
    const std::filesystem::path& path);

}  // namespace srood
