#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "byolim/tensor.hpp"

namespace byolim {

struct LabeledImage {
  Tensor pixels;  // [3, H, W], values in [0, 1]
  int label = 0;
  std::string source_id;
};

struct Dataset {
  std::vector<LabeledImage> items;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return items.size(); }
  std::vector<int> labels() const;
  std::vector<std::size_t> class_counts() const;
  std::vector<const Tensor*> images(const std::vector<std::size_t>& indices) const;
};

/// Binary 8-bit PPM (P6) codec.
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

/// Bilinear resampling of a [C, H, W] image with a corner-aligned grid.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Loads <root>/<class_dir>/*.ppm. Labels follow lexicographic class
/// directory order; files are read in lexicographic order. Images are resized
/// to `resize` (height, width) when given.
Dataset load_directory_dataset(const std::filesystem::path& root, std::size_t num_classes,
                               std::optional<std::array<std::size_t, 2>> resize = std::nullopt);

/// Writes a dataset as a class-per-directory PPM tree.
void export_dataset(const Dataset& dataset, const std::filesystem::path& root);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Deterministic shuffled split. Stratified splits apportion each class
/// separately so per-class proportions match within one sample.
DatasetSplit split_dataset(const std::vector<int>& labels, const SplitFractions& fractions,
                           std::uint64_t seed, bool stratified);

/// Unlabeled index-set split (no stratification).
DatasetSplit split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed);

struct KFoldPlan {
  std::vector<std::vector<std::size_t>> folds;

  std::size_t k() const noexcept { return folds.size(); }
  /// Every index outside fold i, in ascending order.
  std::vector<std::size_t> training_indices(std::size_t i) const;
};

/// Shuffled partition into k folds whose sizes differ by at most one.
KFoldPlan kfold_plan(std::size_t n_samples, std::size_t k, std::uint64_t seed);

/// Synthetic thermal images: each class is a heat-signature family given by
/// its hot-spot count (1 + c mod 4), angular placement (2 pi c / 11) and spot
/// width (c / 4), over a base thermal gradient, rendered through a fixed
/// pseudo-colour map with additive noise (sigma 0.02).
Dataset synth_thermal_dataset(std::size_t num_classes, std::size_t per_class, std::size_t height,
                              std::size_t width, std::uint64_t seed);

}  // namespace byolim
