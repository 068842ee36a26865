#include "byolim/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace byolim {

void AugmentationSpec::validate() const {
  if (rotation_max_deg < 0 || shift_frac < 0 || shear_range < 0 || zoom_range < 0 || brightness < 0) {
    throw Error(ErrorCode::config_invalid, "augmentation ranges must be non-negative");
  }
  if (shift_frac >= 1.0) throw Error(ErrorCode::config_invalid, "shift_frac must be < 1");
  if (zoom_range >= 1.0) throw Error(ErrorCode::config_invalid, "zoom_range must be < 1");
  if (brightness >= 1.0) throw Error(ErrorCode::config_invalid, "brightness must be < 1");
}

AugmentationSpec AugmentationSpec::identity() {
  return {0.0, 0.0, 0.0, 0.0, false, FillMode::nearest, 0.0};
}

AugmentationSpec AugmentationSpec::limited() {
  AugmentationSpec s = identity();
  s.hflip = true;
  return s;
}

AugmentationSpec AugmentationSpec::extended() {
  AugmentationSpec s;
  s.brightness = 0.1;
  return s;
}

namespace {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

AffineParams sample_params(const AugmentationSpec& spec, Rng& rng) {
  AffineParams p;
  p.angle_deg = uniform(rng, -spec.rotation_max_deg, spec.rotation_max_deg);
  p.dx_frac = uniform(rng, -spec.shift_frac, spec.shift_frac);
  p.dy_frac = uniform(rng, -spec.shift_frac, spec.shift_frac);
  p.shear = uniform(rng, -spec.shear_range, spec.shear_range);
  p.zoom = uniform(rng, 1.0 - spec.zoom_range, 1.0 + spec.zoom_range);
  const bool coin = std::bernoulli_distribution(0.5)(rng);
  p.flip = spec.hflip && coin;
  p.brightness = uniform(rng, 1.0 - spec.brightness, 1.0 + spec.brightness);
  return p;
}

Tensor apply_affine(const Tensor& image, const AffineParams& p, FillMode) {
  if (image.rank() != 3) {
    throw Error(ErrorCode::shape_mismatch, "apply_affine expects [C,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;

  // Forward linear part M = R * S * Z * F.
  const double rad = p.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double f = p.flip ? -1.0 : 1.0;
  const double m00 = p.zoom * f * c, m01 = p.zoom * (c * p.shear - s);
  const double m10 = p.zoom * f * s, m11 = p.zoom * (s * p.shear + c);
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  const double tx = p.dx_frac * static_cast<double>(w);
  const double ty = p.dy_frac * static_cast<double>(h);

  std::vector<std::size_t> source(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double ox = static_cast<double>(x) - cx - tx;
      const double oy = static_cast<double>(y) - cy - ty;
      const double sx = i00 * ox + i01 * oy + cx;
      const double sy = i10 * ox + i11 * oy + cy;
      const double rx = std::clamp(std::floor(sx + 0.5), 0.0, static_cast<double>(w - 1));
      const double ry = std::clamp(std::floor(sy + 0.5), 0.0, static_cast<double>(h - 1));
      source[y * w + x] = static_cast<std::size_t>(ry) * w + static_cast<std::size_t>(rx);
    }
  }

  Tensor out(image.shape());
  const float gain = static_cast<float>(p.brightness);
  for (std::size_t k = 0; k < ch; ++k) {
    const float* src = image.raw() + k * h * w;
    float* dst = out.raw() + k * h * w;
    for (std::size_t i = 0; i < h * w; ++i) dst[i] = src[source[i]];
    if (gain != 1.0f) {
      for (std::size_t i = 0; i < h * w; ++i) dst[i] = std::clamp(dst[i] * gain, 0.0f, 1.0f);
    }
  }
  return out;
}

Tensor augment(const Tensor& image, const AugmentationSpec& spec, Rng& rng) {
  return apply_affine(image, sample_params(spec, rng), spec.fill_mode);
}

std::pair<Tensor, Tensor> augment_pair(const Tensor& image, const AugmentationSpec& spec, Rng& rng) {
  const AffineParams first = sample_params(spec, rng);
  const AffineParams second = sample_params(spec, rng);
  return {apply_affine(image, first, spec.fill_mode), apply_affine(image, second, spec.fill_mode)};
}

}  // namespace byolim
