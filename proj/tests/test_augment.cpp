#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "byolim/augment.hpp"
#include "test_support.hpp"

using namespace byolim;
using byolim::testing::random_tensor_f;

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mul3(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Mat3 invert3(Mat3 a) {
  Mat3 inv{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (int j = 0; j < 3; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int j = 0; j < 3; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

struct Reference {
  Tensor image;
  std::vector<bool> ambiguous;  // source coordinate sits on a rounding boundary
};

// Homogeneous-matrix composition of the same geometric model, inverted
// numerically, evaluated pixel by pixel.
Reference reference_warp(const Tensor& img, const AffineParams& p) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const double cx = (static_cast<double>(w) - 1) / 2, cy = (static_cast<double>(h) - 1) / 2;
  const double a = p.angle_deg * std::numbers::pi / 180;
  const Mat3 to_center{{{1, 0, -cx}, {0, 1, -cy}, {0, 0, 1}}};
  const Mat3 from_center{{{1, 0, cx + p.dx_frac * static_cast<double>(w)}, {0, 1, cy + p.dy_frac * static_cast<double>(h)}, {0, 0, 1}}};
  const Mat3 flip{{{p.flip ? -1.0 : 1.0, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  const Mat3 zoom{{{p.zoom, 0, 0}, {0, p.zoom, 0}, {0, 0, 1}}};
  const Mat3 shear{{{1, p.shear, 0}, {0, 1, 0}, {0, 0, 1}}};
  const Mat3 rot{{{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}}};
  const Mat3 fwd = mul3(from_center, mul3(rot, mul3(shear, mul3(zoom, mul3(flip, to_center)))));
  const Mat3 inv = invert3(fwd);
  Reference ref{Tensor(img.shape()), std::vector<bool>(h * w, false)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double X = static_cast<double>(x), Y = static_cast<double>(y);
      const double sx = inv[0][0] * X + inv[0][1] * Y + inv[0][2];
      const double sy = inv[1][0] * X + inv[1][1] * Y + inv[1][2];
      auto boundary = [](double v) { return std::abs(v - std::floor(v) - 0.5) < 1e-7; };
      ref.ambiguous[y * w + x] = boundary(sx) || boundary(sy);
      const long rx = std::clamp(std::lround(std::floor(sx + 0.5)), 0L, static_cast<long>(w) - 1);
      const long ry = std::clamp(std::lround(std::floor(sy + 0.5)), 0L, static_cast<long>(h) - 1);
      for (std::size_t k = 0; k < c; ++k) {
        float v = img[(k * h + static_cast<std::size_t>(ry)) * w + static_cast<std::size_t>(rx)];
        if (p.brightness != 1.0) v = std::clamp(v * static_cast<float>(p.brightness), 0.0f, 1.0f);
        ref.image[(k * h + y) * w + x] = v;
      }
    }
  return ref;
}

}  // namespace

TEST_CASE("sample_params: zero ranges give identity, seeds are reproducible") {
  Rng rng(3);
  CHECK(sample_params(AugmentationSpec::identity(), rng) == AffineParams{});
  Rng a(99), b(99);
  const AugmentationSpec spec;
  for (int i = 0; i < 10; ++i) CHECK(sample_params(spec, a) == sample_params(spec, b));
}

TEST_CASE("sample_params: draws stay in range and rotation is centred") {
  Rng rng(17);
  AugmentationSpec spec;
  spec.brightness = 0.1;
  double angle_sum = 0.0;
  int flips = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const AffineParams p = sample_params(spec, rng);
    REQUIRE(std::abs(p.angle_deg) <= 20.0);
    REQUIRE(std::abs(p.dx_frac) <= 0.2);
    REQUIRE(std::abs(p.dy_frac) <= 0.2);
    REQUIRE(std::abs(p.shear) <= 0.2);
    REQUIRE(p.zoom >= 0.8);
    REQUIRE(p.zoom <= 1.2);
    REQUIRE(std::abs(p.brightness - 1.0) <= 0.1);
    angle_sum += p.angle_deg;
    flips += p.flip ? 1 : 0;
  }
  CHECK(std::abs(angle_sum / n) < 0.5);
  CHECK(flips > n * 45 / 100);
  CHECK(flips < n * 55 / 100);
}

TEST_CASE("apply_affine: identity, double flip and one-pixel translation") {
  std::mt19937_64 g(5);
  const Tensor img = random_tensor_f({3, 7, 9}, g);
  CHECK(apply_affine(img, AffineParams{}) == img);

  AffineParams flip;
  flip.flip = true;
  const Tensor once = apply_affine(img, flip);
  CHECK(once != img);
  CHECK(apply_affine(once, flip) == img);
  CHECK(once[0] == img[8]);

  const Tensor row({1, 1, 4}, {0.1f, 0.2f, 0.3f, 0.4f});
  AffineParams shift;
  shift.dx_frac = 0.25;  // one pixel of a width-4 row
  CHECK(apply_affine(row, shift) == Tensor({1, 1, 4}, {0.1f, 0.1f, 0.2f, 0.3f}));
}

TEST_CASE("apply_affine agrees with a homogeneous-matrix reference warp") {
  std::mt19937_64 g(21);
  Rng rng(8);
  AugmentationSpec spec;
  spec.brightness = 0.2;
  std::size_t compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 5 + static_cast<std::size_t>(trial % 7), w = 4 + static_cast<std::size_t>(trial % 9);
    const Tensor img = random_tensor_f({2, h, w}, g);
    const AffineParams p = sample_params(spec, rng);
    const Tensor got = apply_affine(img, p);
    const Reference ref = reference_warp(img, p);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < h * w; ++i) {
        if (ref.ambiguous[i]) continue;
        REQUIRE(got[k * h * w + i] == ref.image[k * h * w + i]);
        ++compared;
      }
  }
  CHECK(compared > 10000);
}

TEST_CASE("augment_pair: degenerate spec, determinism and distinct views") {
  std::mt19937_64 g(9);
  const Tensor img = random_tensor_f({3, 16, 16}, g);
  Rng r0(1);
  const auto [v0, w0] = augment_pair(img, AugmentationSpec::identity(), r0);
  CHECK(v0 == img);
  CHECK(w0 == img);

  Rng a(5), b(5);
  const auto pa = augment_pair(img, AugmentationSpec{}, a);
  const auto pb = augment_pair(img, AugmentationSpec{}, b);
  CHECK(pa.first == pb.first);
  CHECK(pa.second == pb.second);

  Rng rng(77);
  int distinct = 0;
  for (int i = 0; i < 100; ++i) {
    const auto [v, vp] = augment_pair(img, AugmentationSpec{}, rng);
    distinct += v != vp ? 1 : 0;
  }
  CHECK(distinct >= 99);
}

TEST_CASE("augmentation presets and validation") {
  CHECK_NOTHROW(AugmentationSpec{}.validate());
  CHECK(AugmentationSpec::limited().hflip);
  CHECK(AugmentationSpec::limited().rotation_max_deg == 0.0);
  CHECK(AugmentationSpec::extended().brightness > 0.0);
  AugmentationSpec bad;
  bad.shift_frac = -0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(apply_affine(Tensor({4, 4}), AffineParams{}), Error);
}
