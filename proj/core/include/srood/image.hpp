#pragma once

#include <cstdint>
#include <vector>

namespace srood {

/// Dense image, values in [0, 1], stored as doubles in planar channel-major
/// order: pix[(c * height + y) * width + x].  channels is 1 (grayscale) or
/// 3 (RGB).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pix;

  static Image zeros(int h, int w, int c) {
    Image im;
    im.height = h;
    im.width = w;
    im.channels = c;
    im.pix.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    return im;
  }

  double& at(int c, int y, int x) {
    return pix[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pix[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t size() const { return pix.size(); }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

/// A sampled batch: decoded images plus the manifest row index of each.
struct ImageBatch {
  std::vector<Image> images;
  std::vector<std::int64_t> indices;
};

}  // namespace srood
