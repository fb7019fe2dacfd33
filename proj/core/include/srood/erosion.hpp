#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srood/image.hpp"
#include "srood/rng.hpp"

namespace srood {

enum class ErosionKind { identity, downsample, blackout };

/// Blackout rectangle.  Offsets displace the rectangle centre from the image
/// centre, in pixels (offset_y down, offset_x right).
struct MaskRect {
  int height = 0;
  int width = 0;
  int offset_y = 0;
  int offset_x = 0;
};

/// One erosion operation.  Canonical string forms:
///   identity | down:F | mask:H,W,OY,OX
struct ErosionOp {
  ErosionKind kind = ErosionKind::identity;
  int factor = 1;  // downsample only
  MaskRect mask;   // blackout only

  std::string to_string() const;
  static ErosionOp from_string(const std::string& s);

  static ErosionOp identity() { return ErosionOp{}; }
  static ErosionOp downsample(int factor);
  static ErosionOp blackout(MaskRect m);
};

/// Ordered set of candidate erosions for one detector variant.
struct ErosionSet {
  std::vector<ErosionOp> ops;
};

/// Builds the candidate set for a variant name ("rec", "sr", "inpaint") at
/// the given resolution.  rec -> {identity}; sr -> downsample factors 2 and 4
/// (and 8 when both sides divide by 8); inpaint -> centre squares with sides
/// H/4 and H/2 at horizontal offsets 0, H/8 and H/4.  Ops whose geometry
/// does not fit the resolution are dropped; an empty result is an error.
ErosionSet build_erosion_set(const std::string& variant, int height,
                             int width);

/// Applies one erosion.  identity copies bit-exactly; downsample runs
/// bicubic down- then upsampling; blackout zeroes the rectangle and leaves
/// every other pixel bit-identical.
Image apply_erosion(const Image& im, const ErosionOp& op);

/// Uniform index into the set; every training iteration draws one per
/// sample.
std::size_t sample_erosion_index(const ErosionSet& set, Rng& rng);

/// Separable bicubic resampling (Catmull-Rom kernel, a = -0.5), edge pixels
/// replicated, output clamped to [0, 1].  Resizing to the identical
/// resolution returns a bit-identical copy.
Image bicubic_resize(const Image& im, int out_h, int out_w);

}  // namespace srood
