#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "srood/image.hpp"
#include "srood/rng.hpp"

namespace srood {

enum class Split { train, val_id, test_id, val_ood, test_ood };
inline constexpr int kNumSplits = 5;

Split parse_split(const std::string& name);
const char* split_name(Split s);
bool is_id_split(Split s);

struct ManifestEntry {
  std::string path;  // as written in the manifest, may carry "#k"
  Split split = Split::train;
  int label = -1;  // -1 when the optional label column is absent
};

/// Parsed dataset manifest.  Rows are kept in file order; per-split index
/// lists preserve that order.
struct DatasetManifest {
  std::filesystem::path root;  // base for relative entry paths
  std::vector<ManifestEntry> entries;
  std::array<std::vector<std::int64_t>, kNumSplits> by_split;
  int id_channels = 0;  // channel count shared by the ID splits

  const std::vector<std::int64_t>& split_indices(Split s) const {
    return by_split[static_cast<int>(s)];
  }
  /// Absolute path (fragment included) for entry `index`.
  std::string resolve(std::int64_t index) const;
};

/// Loads and validates a CSV manifest (rows "path,split[,label]").  Every
/// referenced file must exist and ID splits (train, val-id, test-id) must
/// agree on channel count.  Relative paths resolve against `data_root`,
/// else the environment variable SROOD_DATA_ROOT, else the manifest's
/// directory.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path,
                              const std::string& data_root = "");

/// Decodes entry `index` to `channels` planes at `height` x `width`:
/// grayscale replicates to RGB, RGB converts to grayscale by Rec. 709 luma,
/// then bicubic resampling maps the native resolution to the target.
Image load_sample(const DatasetManifest& m, std::int64_t index, int height,
                  int width, int channels);

/// Draws `batch` distinct entries of a split uniformly (partial
/// Fisher-Yates; output in draw order) and decodes them.
ImageBatch sample_batch(const DatasetManifest& m, Split split, int batch,
                        Rng& rng, int height, int width, int channels);

/// Index-only variant of sample_batch, for callers that decode via a cache.
std::vector<std::int64_t> sample_batch_indices(const DatasetManifest& m,
                                               Split split, int batch,
                                               Rng& rng);

/// Lazy decode-and-memoize store over one manifest at a fixed target shape.
/// Training loops revisit samples many times; the cache bounds decode work
/// to one pass over the distinct indices touched.
class SampleCache {
public:
  SampleCache(const DatasetManifest& m, int height, int width, int channels)
      : m_(&m), height_(height), width_(width), channels_(channels) {}

  const Image& get(std::int64_t index);

private:
  const DatasetManifest* m_;
  int height_, width_, channels_;
  std::unordered_map<std::int64_t, Image> cache_;
};

}  // namespace srood
