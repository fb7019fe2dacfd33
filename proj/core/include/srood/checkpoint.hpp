#pragma once

#include <filesystem>

#include "srood/metrics.hpp"
#include "srood/repairer.hpp"

namespace srood {

/// Checkpoint container: magic, format version, architecture description,
/// and named tensors with binary32 payloads, all little-endian.  Loading a
/// file written by a newer or older format version fails with a message
/// naming both versions.  Weights of a freshly initialised or loaded model
/// lie on the binary32 grid, so save -> load -> save reproduces the file
/// byte for byte; saving a model mid-training first rounds the doubles to
/// binary32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_repairer_checkpoint(const std::filesystem::path& path,
                              const RepairerModel& model);
RepairerModel load_repairer_checkpoint(const std::filesystem::path& path);

void save_phi_checkpoint(const std::filesystem::path& path,
                         const PerceptualExtractor& phi);
PerceptualExtractor load_phi_checkpoint(const std::filesystem::path& path);

}  // namespace srood
