#include "srood/dataset.hpp"

#include <cstdlib>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "srood/common.hpp"
#include "srood/erosion.hpp"
#include "srood/image_io.hpp"

namespace srood {

namespace {

const char* kSplitNames[kNumSplits] = {"train", "val-id", "test-id", "val-ood",
                                       "test-ood"};

}  // namespace

Split parse_split(const std::string& name) {
  for (int i = 0; i < kNumSplits; ++i)
    if (name == kSplitNames[i]) return static_cast<Split>(i);
  fail("unknown split '" + name + "'");
}

const char* split_name(Split s) { return kSplitNames[static_cast<int>(s)]; }

bool is_id_split(Split s) {
  return s == Split::train || s == Split::val_id || s == Split::test_id;
}

std::string DatasetManifest::resolve(std::int64_t index) const {
  const std::string& p = entries[static_cast<std::size_t>(index)].path;
  if (std::filesystem::path(p).is_absolute()) return p;
  return (root / p).string();
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path,
                              const std::string& data_root) {
  std::ifstream in(manifest_path);
  require(in.good(), "cannot open manifest: " + manifest_path.string());

  DatasetManifest m;
  if (!data_root.empty()) {
    m.root = data_root;
  } else if (const char* env = std::getenv("SROOD_DATA_ROOT");
             env && *env) {
    m.root = env;
  } else {
    m.root = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                             : std::filesystem::path(".");
  }

  std::unordered_set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    require(c1 != std::string::npos, "malformed manifest row " +
                                         std::to_string(line_no) + ": " + line);
    const auto c2 = line.find(',', c1 + 1);
    ManifestEntry e;
    e.path = line.substr(0, c1);
    require(!e.path.empty(), "empty path in manifest row " +
                                 std::to_string(line_no));
    const std::string split_str =
        c2 == std::string::npos ? line.substr(c1 + 1)
                                : line.substr(c1 + 1, c2 - c1 - 1);
    try {
      e.split = parse_split(split_str);
    } catch (const Error&) {
      fail("unknown split '" + split_str + "' in manifest row " +
           std::to_string(line_no));
    }
    if (c2 != std::string::npos) {
      const std::string label_str = line.substr(c2 + 1);
      require(!label_str.empty() && label_str.find_first_not_of("0123456789") ==
                                        std::string::npos,
              "malformed label in manifest row " + std::to_string(line_no) +
                  ": " + label_str);
      e.label = std::stoi(label_str);
    }
    require(seen.insert(e.path).second, "duplicate path in manifest: " + e.path);
    m.entries.push_back(std::move(e));
  }
  require(!m.entries.empty(), "empty manifest: " + manifest_path.string());

  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.entries.size()); ++i)
    m.by_split[static_cast<int>(m.entries[i].split)].push_back(i);

  // Existence plus header checks.  Headers of a base file are read once even
  // when thousands of rows address records inside it.
  std::unordered_map<std::string, ImageFileInfo> header_cache;
  const auto peek = [&](const std::string& full) -> const ImageFileInfo& {
    auto it = header_cache.find(full);
    if (it == header_cache.end())
      it = header_cache.emplace(full, peek_image_info(full)).first;
    return it->second;
  };
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.entries.size());
       ++i) {
    const std::string full = m.resolve(i);
    long frag = -1;
    const std::string base = split_fragment(full, &frag);
    require(std::filesystem::exists(base), "missing data file: " + full);
    const ImageFileInfo& info = peek(full);
    if (is_id_split(m.entries[static_cast<std::size_t>(i)].split)) {
      if (m.id_channels == 0) m.id_channels = info.channels;
      require(info.channels == m.id_channels,
              "channel count mismatch across ID splits: " + full + " has " +
                  std::to_string(info.channels) + ", expected " +
                  std::to_string(m.id_channels));
    }
  }
  return m;
}

Image load_sample(const DatasetManifest& m, std::int64_t index, int height,
                  int width, int channels) {
  require(index >= 0 && index < static_cast<std::int64_t>(m.entries.size()),
          "manifest index out of range");
  require(channels == 1 || channels == 3, "target channels must be 1 or 3");
  Image im = read_image_file(m.resolve(index));
  if (im.channels == 1 && channels == 3) {
    Image rgb = Image::zeros(im.height, im.width, 3);
    for (int c = 0; c < 3; ++c)
      std::copy(im.pix.begin(), im.pix.end(),
                rgb.pix.begin() + static_cast<std::size_t>(c) * im.height * im.width);
    im = std::move(rgb);
  } else if (im.channels == 3 && channels == 1) {
    Image gray = Image::zeros(im.height, im.width, 1);
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        gray.at(0, y, x) = 0.2126 * im.at(0, y, x) + 0.7152 * im.at(1, y, x) +
                           0.0722 * im.at(2, y, x);
    im = std::move(gray);
  }
  if (im.height != height || im.width != width)
    im = bicubic_resize(im, height, width);
  return im;
}

std::vector<std::int64_t> sample_batch_indices(const DatasetManifest& m,
                                               Split split, int batch,
                                               Rng& rng) {
  const auto& pool = m.split_indices(split);
  require(batch >= 1, "batch size must be positive");
  require(static_cast<std::size_t>(batch) <= pool.size(),
          "batch size " + std::to_string(batch) + " exceeds split '" +
              std::string(split_name(split)) + "' size " +
              std::to_string(pool.size()));
  std::vector<std::int64_t> scratch = pool;
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.below(scratch.size() - i));
    std::swap(scratch[i], scratch[j]);
    out.push_back(scratch[i]);
  }
  return out;
}

ImageBatch sample_batch(const DatasetManifest& m, Split split, int batch,
                        Rng& rng, int height, int width, int channels) {
  ImageBatch b;
  b.indices = sample_batch_indices(m, split, batch, rng);
  b.images.reserve(b.indices.size());
  for (std::int64_t idx : b.indices)
    b.images.push_back(load_sample(m, idx, height, width, channels));
  return b;
}

const Image& SampleCache::get(std::int64_t index) {
  auto it = cache_.find(index);
  if (it == cache_.end())
    it = cache_
             .emplace(index,
                      load_sample(*m_, index, height_, width_, channels_))
             .first;
  return it->second;
}

}  // namespace srood
