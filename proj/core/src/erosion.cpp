#include "srood/erosion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "srood/common.hpp"

namespace srood {

namespace {

/// Catmull-Rom weight (bicubic convolution kernel with a = -0.5).
double cubic_weight(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

/// Resamples one axis of a single channel plane.  `src` is rows x cols; the
/// horizontal pass maps cols -> out_n, the vertical pass maps rows -> out_n.
void resample_axis(const std::vector<double>& src, int rows, int cols,
                   int out_n, bool horizontal, std::vector<double>& dst) {
  const int in_n = horizontal ? cols : rows;
  const double scale = static_cast<double>(in_n) / out_n;
  // Tap indices and weights depend only on the output coordinate.
  std::vector<int> taps(static_cast<std::size_t>(out_n) * 4);
  std::vector<double> wts(static_cast<std::size_t>(out_n) * 4);
  for (int o = 0; o < out_n; ++o) {
    const double srcpos = (o + 0.5) * scale - 0.5;
    const double base = std::floor(srcpos);
    const int i0 = static_cast<int>(base);
    const double t = srcpos - base;
    for (int k = 0; k < 4; ++k) {
      taps[o * 4 + k] = clamp_index(i0 - 1 + k, in_n);
      wts[o * 4 + k] = cubic_weight(t + 1.0 - k);
    }
  }
  if (horizontal) {
    dst.assign(static_cast<std::size_t>(rows) * out_n, 0.0);
    for (int r = 0; r < rows; ++r) {
      const double* row = &src[static_cast<std::size_t>(r) * cols];
      for (int o = 0; o < out_n; ++o) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += wts[o * 4 + k] * row[taps[o * 4 + k]];
        dst[static_cast<std::size_t>(r) * out_n + o] = acc;
      }
    }
  } else {
    dst.assign(static_cast<std::size_t>(out_n) * cols, 0.0);
    for (int o = 0; o < out_n; ++o) {
      for (int c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += wts[o * 4 + k] * src[static_cast<std::size_t>(taps[o * 4 + k]) * cols + c];
        dst[static_cast<std::size_t>(o) * cols + c] = acc;
      }
    }
  }
}

}  // namespace

Image bicubic_resize(const Image& im, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize target must be at least 1x1");
  if (out_h == im.height && out_w == im.width) return im;
  Image out = Image::zeros(out_h, out_w, im.channels);
  std::vector<double> plane(static_cast<std::size_t>(im.height) * im.width);
  std::vector<double> mid, fin;
  for (int c = 0; c < im.channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * im.height * im.width;
    std::copy(im.pix.begin() + base, im.pix.begin() + base + plane.size(),
              plane.begin());
    resample_axis(plane, im.height, im.width, out_w, /*horizontal=*/true, mid);
    resample_axis(mid, im.height, out_w, out_h, /*horizontal=*/false, fin);
    for (std::size_t i = 0; i < fin.size(); ++i)
      out.pix[static_cast<std::size_t>(c) * out_h * out_w + i] =
          std::clamp(fin[i], 0.0, 1.0);
  }
  return out;
}

ErosionOp ErosionOp::downsample(int factor) {
  require(factor >= 2, "downsample factor must be >= 2");
  ErosionOp op;
  op.kind = ErosionKind::downsample;
  op.factor = factor;
  return op;
}

ErosionOp ErosionOp::blackout(MaskRect m) {
  require(m.height >= 1 && m.width >= 1, "mask sides must be >= 1");
  ErosionOp op;
  op.kind = ErosionKind::blackout;
  op.mask = m;
  return op;
}

std::string ErosionOp::to_string() const {
  char buf[64];
  switch (kind) {
    case ErosionKind::identity:
      return "identity";
    case ErosionKind::downsample:
      std::snprintf(buf, sizeof buf, "down:%d", factor);
      return buf;
    case ErosionKind::blackout:
      std::snprintf(buf, sizeof buf, "mask:%d,%d,%d,%d", mask.height,
                    mask.width, mask.offset_y, mask.offset_x);
      return buf;
  }
  fail("unreachable erosion kind");
}

ErosionOp ErosionOp::from_string(const std::string& s) {
  if (s == "identity") return ErosionOp::identity();
  if (s.rfind("down:", 0) == 0) {
    int f = 0, used = -1;
    require(std::sscanf(s.c_str(), "down:%d%n", &f, &used) == 1 &&
                used == static_cast<int>(s.size()) && f >= 2,
            "malformed erosion op: " + s);
    return ErosionOp::downsample(f);
  }
  if (s.rfind("mask:", 0) == 0) {
    MaskRect m;
    int used = -1;
    require(std::sscanf(s.c_str(), "mask:%d,%d,%d,%d%n", &m.height, &m.width,
                        &m.offset_y, &m.offset_x, &used) == 4 &&
                used == static_cast<int>(s.size()),
            "malformed erosion op: " + s);
    return ErosionOp::blackout(m);
  }
  fail("malformed erosion op: " + s);
}

namespace {

/// Top-left corner of the mask; rejects geometry that leaves the image.
bool mask_bounds(const MaskRect& m, int h, int w, int* top, int* left) {
  *top = (h - m.height) / 2 + m.offset_y;
  *left = (w - m.width) / 2 + m.offset_x;
  return m.height >= 1 && m.width >= 1 && *top >= 0 && *left >= 0 &&
         *top + m.height <= h && *left + m.width <= w;
}

}  // namespace

ErosionSet build_erosion_set(const std::string& variant, int height,
                             int width) {
  require(height >= 8 && width >= 8, "resolution must be at least 8x8");
  ErosionSet set;
  if (variant == "rec") {
    set.ops.push_back(ErosionOp::identity());
    return set;
  }
  if (variant == "sr") {
    std::vector<int> factors = {2, 4};
    if (height % 8 == 0 && width % 8 == 0) factors.push_back(8);
    for (int f : factors) {
      if (height % f != 0 || width % f != 0) continue;
      set.ops.push_back(ErosionOp::downsample(f));
    }
    require(!set.ops.empty(),
            "no downsample factor fits the resolution " +
                std::to_string(height) + "x" + std::to_string(width));
    return set;
  }
  if (variant == "inpaint") {
    const int sides[2] = {height / 4, height / 2};
    const int offsets[3] = {0, height / 8, height / 4};
    for (int s : sides) {
      for (int off : offsets) {
        MaskRect m{s, s, 0, off};
        int top, left;
        if (!mask_bounds(m, height, width, &top, &left)) continue;
        set.ops.push_back(ErosionOp::blackout(m));
      }
    }
    require(!set.ops.empty(),
            "no blackout mask fits the resolution " + std::to_string(height) +
                "x" + std::to_string(width));
    return set;
  }
  fail("unknown variant: " + variant + " (expected rec, sr or inpaint)");
}

Image apply_erosion(const Image& im, const ErosionOp& op) {
  switch (op.kind) {
    case ErosionKind::identity:
      return im;
    case ErosionKind::downsample: {
      require(im.height % op.factor == 0 && im.width % op.factor == 0,
              "downsample factor " + std::to_string(op.factor) +
                  " does not divide the resolution");
      Image low = bicubic_resize(im, im.height / op.factor,
                                 im.width / op.factor);
      return bicubic_resize(low, im.height, im.width);
    }
    case ErosionKind::blackout: {
      int top, left;
      require(mask_bounds(op.mask, im.height, im.width, &top, &left),
              "mask does not fit inside the image");
      Image out = im;
      for (int c = 0; c < out.channels; ++c)
        for (int y = top; y < top + op.mask.height; ++y)
          for (int x = left; x < left + op.mask.width; ++x)
            out.at(c, y, x) = 0.0;
      return out;
    }
  }
  fail("unreachable erosion kind");
}

std::size_t sample_erosion_index(const ErosionSet& set, Rng& rng) {
  require(!set.ops.empty(), "erosion set is empty");
  return static_cast<std::size_t>(rng.below(set.ops.size()));
}

}  // namespace srood
