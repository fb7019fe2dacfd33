#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <srood/image.hpp>
#include <srood/rng.hpp>

namespace srood::synth {

/// Anti-aliased digit glyph with jittered size, stroke thickness, placement
/// and intensity.  `label` receives the digit class.
Image digit(Rng& rng, int size, int* label);

/// Random thin-stroke doodle rendered through the digit pipeline: same grid,
/// scaling and lighting, but meandering geometry instead of a glyph.
Image scribble(Rng& rng, int size);

struct CorpusSpec {
  int size = 32;
  int n_train = 256;
  int n_val_id = 64;
  int n_test_id = 64;
  int n_val_ood = 64;
  int n_test_ood = 64;
  std::uint64_t seed = 1;
  bool labels = true;  // digit class on the train rows
};

/// Digits as the in-distribution corpus, scribbles as OOD.  Writes one IDX
/// shard per split plus manifest.csv under `dir`; returns the manifest path.
std::filesystem::path write_corpus(const std::filesystem::path& dir,
                                   const CorpusSpec& spec);

/// Fresh unique directory, recursively deleted on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Writes "key = value" lines.
void write_config(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace srood::synth
