#include "byolim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "byolim/rng.hpp"

namespace fs = std::filesystem;

namespace byolim {

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.label);
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& item : items) ++counts.at(static_cast<std::size_t>(item.label));
  return counts;
}

std::vector<const Tensor*> Dataset::images(const std::vector<std::size_t>& indices) const {
  std::vector<const Tensor*> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(&items.at(i).pixels);
  return out;
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

}  // namespace

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::unreadable_image, "cannot open " + path.string());
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::unreadable_image, path.string() + ": " + why);
  };
  if (ppm_token(in) != "P6") throw fail("not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw fail("malformed header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw fail("unsupported dimensions or maxval");
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw fail("truncated pixel data");
  Tensor out({3, h, w});
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * w * h + i] = static_cast<float>(bytes[i * 3 + c]) / 255.0f;
  return out;
}

void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw Error(ErrorCode::shape_mismatch, "write_ppm expects [3,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(w * h * 3);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * w * h + i], 0.0f, 1.0f);
      bytes[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) throw Error(ErrorCode::shape_mismatch, "resize expects [C,H,W]");
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (out_h == 0 || out_w == 0) throw Error(ErrorCode::shape_mismatch, "resize target must be positive");
  if (out_h == h && out_w == w) return image;
  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    return out > 1 ? static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  };
  Tensor out({ch, out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = coord(y, h, out_h);
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = coord(x, w, out_w);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ch; ++c) {
        const float* p = image.raw() + c * h * w;
        const double top = p[y0 * w + x0] * (1 - fx) + p[y0 * w + x1] * fx;
        const double bottom = p[y1 * w + x0] * (1 - fx) + p[y1 * w + x1] * fx;
        out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

Dataset load_directory_dataset(const fs::path& root, std::size_t num_classes,
                               std::optional<std::array<std::size_t, 2>> resize) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::missing_class_dir, "no dataset directory " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw Error(ErrorCode::missing_class_dir, "no class directories under " + root.string());
  if (class_dirs.size() != num_classes) {
    throw Error(ErrorCode::class_count_mismatch, root.string() + " has " + std::to_string(class_dirs.size()) +
                                                     " class directories, expected " + std::to_string(num_classes));
  }
  Dataset ds;
  ds.num_classes = num_classes;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    const std::string name = class_dirs[label].filename().string();
    ds.class_names.push_back(name);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) ds.warnings.push_back("class '" + name + "' has no images");
    for (const auto& file : files) {
      Tensor px = read_ppm(file);
      if (resize) px = resize_bilinear(px, (*resize)[0], (*resize)[1]);
      ds.items.push_back({std::move(px), static_cast<int>(label), name + "/" + file.filename().string()});
    }
  }
  return ds;
}

void export_dataset(const Dataset& dataset, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + root.string() + ": " + ec.message());
  for (const auto& name : dataset.class_names) {
    fs::create_directories(root / name, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create " + (root / name).string() + ": " + ec.message());
  }
  for (const auto& item : dataset.items) write_ppm(root / item.source_id, item.pixels);
}

namespace {

void check_fractions(const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::config_invalid, "split fractions must be non-negative and sum to 1");
  }
}

void apportion(const std::vector<std::size_t>& shuffled, const SplitFractions& f, DatasetSplit& out) {
  const std::size_t n = shuffled.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val));
  const auto n_test = std::min(n - n_val, static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.test)));
  const std::size_t n_train = n - n_val - n_test;
  out.train.insert(out.train.end(), shuffled.begin(), shuffled.begin() + n_train);
  out.val.insert(out.val.end(), shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
  out.test.insert(out.test.end(), shuffled.begin() + n_train + n_val, shuffled.end());
}

}  // namespace

DatasetSplit split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed) {
  check_fractions(fractions);
  if (n == 0) throw Error(ErrorCode::empty_dataset, "cannot split an empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit split;
  apportion(order, fractions, split);
  return split;
}

DatasetSplit split_dataset(const std::vector<int>& labels, const SplitFractions& fractions,
                           std::uint64_t seed, bool stratified) {
  if (!stratified) return split_indices(labels.size(), fractions, seed);
  check_fractions(fractions);
  if (labels.empty()) throw Error(ErrorCode::empty_dataset, "cannot split an empty dataset");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw Error(ErrorCode::label_out_of_range, "negative label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  Rng rng = make_rng(seed, "split.stratified");
  DatasetSplit split;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    apportion(members, fractions, split);
  }
  // Interleave classes within each subset.
  for (auto* part : {&split.train, &split.val, &split.test}) std::shuffle(part->begin(), part->end(), rng);
  return split;
}

std::vector<std::size_t> KFoldPlan::training_indices(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != i) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

KFoldPlan kfold_plan(std::size_t n_samples, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::config_invalid, "k-fold needs k >= 2");
  if (n_samples < k) {
    throw Error(ErrorCode::too_few_samples,
                std::to_string(n_samples) + " samples for " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "kfold");
  std::shuffle(order.begin(), order.end(), rng);
  KFoldPlan plan;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n_samples / k + (f < n_samples % k ? 1 : 0);
    plan.folds.emplace_back(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return plan;
}

namespace {

// Fixed pseudo-colour map from normalized temperature to RGB.
std::array<double, 3> thermal_color(double t) {
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {clamp01(1.6 * t - 0.1), clamp01(2.0 * t - 0.8), clamp01(0.7 - 2.0 * std::abs(t - 0.3))};
}

}  // namespace

Dataset synth_thermal_dataset(std::size_t num_classes, std::size_t per_class, std::size_t height,
                              std::size_t width, std::uint64_t seed) {
  if (num_classes < 2 || per_class < 1 || height < 16 || width < 16) {
    throw Error(ErrorCode::config_invalid, "synthetic dataset needs >= 2 classes, >= 1 image per class, size >= 16");
  }
  static constexpr double kSpotWidth[] = {0.08, 0.14, 0.24};
  Dataset ds;
  ds.num_classes = num_classes;
  const int digits = num_classes > 100 ? 3 : 2;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::string name = std::to_string(c);
    name.insert(0, static_cast<std::size_t>(std::max(0, digits - static_cast<int>(name.size()))), '0');
    ds.class_names.push_back("class_" + name);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t spots = 1 + c % 4;
    const double base_angle = 2.0 * std::numbers::pi * static_cast<double>(c) / 11.0;
    const double sigma_base = kSpotWidth[(c / 4) % 3];
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng = make_rng(seed, "synth", c * 1000003 + i);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      std::normal_distribution<double> noise(0.0, 0.02);
      const double ambient = 0.12 + 0.04 * u(rng);
      const double gx = 0.05 * u(rng), gy = 0.10 + 0.05 * u(rng);
      struct Spot { double x, y, sigma, amp; };
      std::vector<Spot> hot;
      const double radius = 0.45 + 0.05 * u(rng);
      for (std::size_t s = 0; s < spots; ++s) {
        const double a = base_angle + 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(spots) +
                         0.1 * u(rng);
        hot.push_back({radius * std::cos(a), radius * std::sin(a), sigma_base * (1.0 + 0.1 * u(rng)),
                       0.65 + 0.1 * u(rng)});
      }
      Tensor img({3, height, width});
      for (std::size_t y = 0; y < height; ++y) {
        const double vy = 2.0 * static_cast<double>(y) / static_cast<double>(height - 1) - 1.0;
        for (std::size_t x = 0; x < width; ++x) {
          const double vx = 2.0 * static_cast<double>(x) / static_cast<double>(width - 1) - 1.0;
          double t = ambient + gx * vx + gy * (vy + 1.0) / 2.0;
          for (const Spot& s : hot) {
            const double d2 = (vx - s.x) * (vx - s.x) + (vy - s.y) * (vy - s.y);
            t += s.amp * std::exp(-d2 / (2.0 * s.sigma * s.sigma));
          }
          const auto rgb = thermal_color(std::clamp(t, 0.0, 1.0));
          for (std::size_t k = 0; k < 3; ++k) {
            img[(k * height + y) * width + x] = static_cast<float>(std::clamp(rgb[k] + noise(rng), 0.0, 1.0));
          }
        }
      }
      std::string idx = std::to_string(i);
      idx.insert(0, idx.size() < 4 ? 4 - idx.size() : 0, '0');
      ds.items.push_back({std::move(img), static_cast<int>(c),
                          ds.class_names[c] + "/" + ds.class_names[c] + "_" + idx + ".ppm"});
    }
  }
  return ds;
}

}  // namespace byolim
