#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <srood/common.hpp>
#include <srood/dataset.hpp>
#include <srood/erosion.hpp>
#include <srood/image_io.hpp>
#include <srood/rng.hpp>

#include "synth.hpp"

using namespace srood;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
  Image im = Image::zeros(h, w, c);
  Rng rng(seed);
  for (double& p : im.pix) p = rng.uniform();
  return im;
}

void write_manifest(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

/// Tiny on-disk dataset: three grayscale PNGs across three splits.
struct MiniData {
  synth::TempDir tmp;
  fs::path manifest;

  MiniData() {
    write_png((tmp.path() / "a.png").string(), random_image(8, 8, 1, 1));
    write_png((tmp.path() / "b.png").string(), random_image(8, 8, 1, 2));
    write_png((tmp.path() / "c.png").string(), random_image(8, 8, 1, 3));
    manifest = tmp.path() / "manifest.csv";
    write_manifest(manifest,
                   "a.png,train,4\n"
                   "b.png,test-id\n"
                   "c.png,test-ood\n");
  }
};

}  // namespace

TEST_CASE("manifest parsing keeps rows, splits and labels") {
  MiniData d;
  const DatasetManifest m = load_manifest(d.manifest);
  REQUIRE(m.entries.size() == 3);
  CHECK(m.entries[0].split == Split::train);
  CHECK(m.entries[0].label == 4);
  CHECK(m.entries[1].split == Split::test_id);
  CHECK(m.entries[1].label == -1);
  CHECK(m.split_indices(Split::train) == std::vector<std::int64_t>{0});
  CHECK(m.split_indices(Split::test_id) == std::vector<std::int64_t>{1});
  CHECK(m.split_indices(Split::test_ood) == std::vector<std::int64_t>{2});
  CHECK(m.split_indices(Split::val_id).empty());
  CHECK(m.resolve(0) == (d.tmp.path() / "a.png").string());
}

TEST_CASE("split helpers") {
  CHECK(parse_split("train") == Split::train);
  CHECK(parse_split("val-id") == Split::val_id);
  CHECK(parse_split("test-ood") == Split::test_ood);
  CHECK_THROWS_AS(parse_split("validation"), Error);
  CHECK(std::string(split_name(Split::val_ood)) == "val-ood");
  CHECK(is_id_split(Split::train));
  CHECK(is_id_split(Split::val_id));
  CHECK(!is_id_split(Split::val_ood));
  CHECK(!is_id_split(Split::test_ood));
}

TEST_CASE("manifest validation failures") {
  synth::TempDir tmp;
  write_png((tmp.path() / "a.png").string(), random_image(8, 8, 1, 1));
  const fs::path mpath = tmp.path() / "m.csv";

  SUBCASE("empty manifest") {
    write_manifest(mpath, "\n\n");
    CHECK_THROWS_WITH_AS(load_manifest(mpath),
                         ("empty manifest: " + mpath.string()).c_str(),
                         Error);
  }
  SUBCASE("unknown split") {
    write_manifest(mpath, "a.png,weird\n");
    CHECK_THROWS_WITH_AS(load_manifest(mpath),
                         "unknown split 'weird' in manifest row 1", Error);
  }
  SUBCASE("duplicate path") {
    write_manifest(mpath, "a.png,train\na.png,test-id\n");
    CHECK_THROWS_WITH_AS(load_manifest(mpath),
                         "duplicate path in manifest: a.png", Error);
  }
  SUBCASE("missing data file") {
    write_manifest(mpath, "a.png,train\nghost.png,train\n");
    CHECK_THROWS_AS(load_manifest(mpath), Error);
  }
  SUBCASE("bad label") {
    write_manifest(mpath, "a.png,train,seven\n");
    CHECK_THROWS_AS(load_manifest(mpath), Error);
  }
  SUBCASE("channel mismatch across id splits") {
    write_png((tmp.path() / "rgb.png").string(), random_image(8, 8, 3, 2));
    write_manifest(mpath, "a.png,train\nrgb.png,test-id\n");
    CHECK_THROWS_AS(load_manifest(mpath), Error);
  }
  SUBCASE("ood channel mismatch is allowed") {
    write_png((tmp.path() / "rgb.png").string(), random_image(8, 8, 3, 2));
    write_manifest(mpath, "a.png,train\nrgb.png,test-ood\n");
    const DatasetManifest m = load_manifest(mpath);
    CHECK(m.id_channels == 1);
  }
}

TEST_CASE("data root resolution precedence") {
  synth::TempDir data_dir;
  synth::TempDir manifest_dir;
  write_png((data_dir.path() / "x.png").string(), random_image(8, 8, 1, 1));
  const fs::path mpath = manifest_dir.path() / "m.csv";
  write_manifest(mpath, "x.png,train\n");

  // Manifest-relative fails: the file lives elsewhere.
  CHECK_THROWS_AS(load_manifest(mpath), Error);

  // Explicit root wins.
  const DatasetManifest m = load_manifest(mpath, data_dir.path().string());
  CHECK(m.root == data_dir.path());

  // Environment root is the middle preference.
  setenv("SROOD_DATA_ROOT", data_dir.path().string().c_str(), 1);
  const DatasetManifest menv = load_manifest(mpath);
  CHECK(menv.root == data_dir.path());
  unsetenv("SROOD_DATA_ROOT");
}

TEST_CASE("sample loading converts channels then resolution") {
  synth::TempDir tmp;
  const Image gray = random_image(16, 16, 1, 4);
  const Image rgb = random_image(16, 16, 3, 5);
  write_png((tmp.path() / "gray.png").string(), gray);
  write_png((tmp.path() / "rgb.png").string(), rgb);
  const fs::path mpath = tmp.path() / "m.csv";
  write_manifest(mpath, "gray.png,train\nrgb.png,test-ood\n");
  const DatasetManifest m = load_manifest(mpath);

  const Image native = read_image_file((tmp.path() / "gray.png").string());

  // Same-shape load is the decode itself.
  CHECK(load_sample(m, 0, 16, 16, 1).pix == native.pix);

  // Downsized load equals resampling the full decode.
  CHECK(load_sample(m, 0, 8, 8, 1).pix == bicubic_resize(native, 8, 8).pix);

  // Grayscale to RGB replicates the plane.
  const Image as_rgb = load_sample(m, 0, 16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(as_rgb.at(0, y, x) == native.at(0, y, x));
      CHECK(as_rgb.at(1, y, x) == native.at(0, y, x));
      CHECK(as_rgb.at(2, y, x) == native.at(0, y, x));
    }

  // RGB to grayscale is the Rec. 709 luma, before any resizing.
  const Image rgb_native = read_image_file((tmp.path() / "rgb.png").string());
  const Image as_gray = load_sample(m, 1, 8, 8, 1);
  Image luma = Image::zeros(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      luma.at(0, y, x) = 0.2126 * rgb_native.at(0, y, x) +
                         0.7152 * rgb_native.at(1, y, x) +
                         0.0722 * rgb_native.at(2, y, x);
  CHECK(as_gray.pix == bicubic_resize(luma, 8, 8).pix);
}

TEST_CASE("batch sampling draws distinct seeded indices") {
  synth::TempDir tmp;
  std::vector<Image> images;
  for (int i = 0; i < 5; ++i) images.push_back(random_image(8, 8, 1, i));
  write_idx((tmp.path() / "t.idx").string(), images);
  std::string body;
  for (int i = 0; i < 5; ++i)
    body += "t.idx#" + std::to_string(i) + ",train\n";
  const fs::path mpath = tmp.path() / "m.csv";
  write_manifest(mpath, body);
  const DatasetManifest m = load_manifest(mpath);

  SUBCASE("full-split batch is a permutation") {
    Rng rng = Rng::stream(1, Rng::kBatch, 0);
    const auto idxs = sample_batch_indices(m, Split::train, 5, rng);
    CHECK(std::set<std::int64_t>(idxs.begin(), idxs.end()).size() == 5);
  }
  SUBCASE("same substream, same batch") {
    Rng r1 = Rng::stream(1, Rng::kBatch, 7);
    Rng r2 = Rng::stream(1, Rng::kBatch, 7);
    CHECK(sample_batch_indices(m, Split::train, 3, r1) ==
          sample_batch_indices(m, Split::train, 3, r2));
  }
  SUBCASE("oversized batch is rejected") {
    Rng rng = Rng::stream(1, Rng::kBatch, 0);
    CHECK_THROWS_AS(sample_batch_indices(m, Split::train, 6, rng), Error);
  }
  SUBCASE("single draws are uniform") {
    Rng rng = Rng::stream(1, Rng::kBatch, 1);
    std::vector<int> counts(5, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i)
      ++counts[sample_batch_indices(m, Split::train, 1, rng)[0]];
    for (const int c : counts) {
      CHECK(c > draws / 5 - draws / 100);
      CHECK(c < draws / 5 + draws / 100);
    }
  }
  SUBCASE("sample_batch decodes what the indices name") {
    Rng r1 = Rng::stream(1, Rng::kBatch, 2);
    Rng r2 = Rng::stream(1, Rng::kBatch, 2);
    const auto idxs = sample_batch_indices(m, Split::train, 3, r1);
    const ImageBatch batch = sample_batch(m, Split::train, 3, r2, 8, 8, 1);
    CHECK(batch.indices == idxs);
    REQUIRE(batch.images.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(batch.images[i].pix == load_sample(m, idxs[i], 8, 8, 1).pix);
  }
}

TEST_CASE("sample cache memoizes decodes") {
  MiniData d;
  const DatasetManifest m = load_manifest(d.manifest);
  SampleCache cache(m, 8, 8, 1);
  const Image& first = cache.get(0);
  CHECK(first.pix == load_sample(m, 0, 8, 8, 1).pix);
  const Image& again = cache.get(0);
  CHECK(&first == &again);
}
