#pragma once

#include <utility>

#include "byolim/rng.hpp"
#include "byolim/tensor.hpp"

namespace byolim {

enum class FillMode { nearest };

/// Ranges of the random geometric augmentation. Rotation in degrees, shift as
/// a fraction of the image extent, shear as a horizontal slope, zoom as a
/// relative scale half-width. brightness is a relative jitter half-width.
struct AugmentationSpec {
  double rotation_max_deg = 20.0;
  double shift_frac = 0.2;
  double shear_range = 0.2;
  double zoom_range = 0.2;
  bool hflip = true;
  FillMode fill_mode = FillMode::nearest;
  double brightness = 0.0;

  void validate() const;

  /// No-op augmentation.
  static AugmentationSpec identity();
  /// Horizontal flips only.
  static AugmentationSpec limited();
  /// Default ranges plus +-10% brightness jitter.
  static AugmentationSpec extended();
};

struct AffineParams {
  double angle_deg = 0.0;
  double dx_frac = 0.0;
  double dy_frac = 0.0;
  double shear = 0.0;
  double zoom = 1.0;
  bool flip = false;
  double brightness = 1.0;

  bool operator==(const AffineParams&) const = default;
};

AffineParams sample_params(const AugmentationSpec& spec, Rng& rng);

/// Warps a [C, H, W] image. The forward map is flip, zoom, shear, rotation and
/// translation about the image centre; each output pixel reads its inverse
/// image with nearest-neighbour rounding, clamped to the border.
Tensor apply_affine(const Tensor& image, const AffineParams& p, FillMode fill = FillMode::nearest);

Tensor augment(const Tensor& image, const AugmentationSpec& spec, Rng& rng);

/// Two independent augmentations (v, v') of the same image.
std::pair<Tensor, Tensor> augment_pair(const Tensor& image, const AugmentationSpec& spec, Rng& rng);

}  // namespace byolim
