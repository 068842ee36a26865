#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include "byolim/data.hpp"
#include "test_support.hpp"

using namespace byolim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Tensor quantized_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  Tensor t({3, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(byte(g)) / 255.0f;
  return t;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::io_error;
}

std::vector<std::size_t> sorted_union(const DatasetSplit& s) {
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST_CASE("ppm round trip") {
  TempDir dir("byolim_test_ppm");
  const Tensor img = quantized_image(5, 7, 1);
  write_ppm(dir.path / "a.ppm", img);
  const Tensor back = read_ppm(dir.path / "a.ppm");
  CHECK(back.shape() == Shape{3, 5, 7});
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-6));
  std::ofstream(dir.path / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK(code_of([&] { read_ppm(dir.path / "bad.ppm"); }) == ErrorCode::unreadable_image);
  CHECK(code_of([&] { read_ppm(dir.path / "missing.ppm"); }) == ErrorCode::unreadable_image);
}

TEST_CASE("resize_bilinear examples") {
  std::mt19937_64 g(2);
  const Tensor img = byolim::testing::random_tensor_f({3, 6, 5}, g);
  const Tensor same = resize_bilinear(img, 6, 5);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(same[i] - img[i]) <= 1e-6);

  const Tensor flat = resize_bilinear(Tensor({3, 4, 4}, 0.3f), 9, 2);
  for (float v : flat.data()) CHECK(v == doctest::Approx(0.3f));

  Tensor ramp({3, 2, 2});
  for (std::size_t c = 0; c < 3; ++c) {
    ramp[c * 4 + 1] = 1.0f;
    ramp[c * 4 + 3] = 1.0f;
  }
  const Tensor up = resize_bilinear(ramp, 3, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 3; ++y) {
      CHECK(up[(c * 3 + y) * 3 + 0] == 0.0f);
      CHECK(up[(c * 3 + y) * 3 + 1] == doctest::Approx(0.5f));
      CHECK(up[(c * 3 + y) * 3 + 2] == 1.0f);
    }
}

TEST_CASE("load_directory_dataset: labels, warnings and errors") {
  TempDir dir("byolim_test_load");
  for (int c = 0; c < 11; ++c) {
    const fs::path cls = dir.path / ("state_" + std::string(1, static_cast<char>('a' + c)));
    fs::create_directories(cls);
    if (c == 4) continue;  // empty class directory
    for (int i = 0; i < 3; ++i)
      write_ppm(cls / ("img" + std::to_string(i) + ".ppm"), quantized_image(6, 8, static_cast<std::uint64_t>(c * 10 + i)));
  }
  const Dataset ds = load_directory_dataset(dir.path, 11);
  CHECK(ds.num_classes == 11);
  CHECK(ds.size() == 30);
  CHECK(ds.class_names.front() == "state_a");
  REQUIRE(ds.warnings.size() == 1);
  CHECK(ds.warnings[0].find("state_e") != std::string::npos);
  const auto counts = ds.class_counts();
  CHECK(counts[4] == 0);
  CHECK(counts[0] == 3);
  CHECK(ds.items[0].label == 0);
  CHECK(ds.items.back().label == 10);

  const Dataset resized = load_directory_dataset(dir.path, 11, std::array<std::size_t, 2>{4, 4});
  CHECK(resized.items[0].pixels.shape() == Shape{3, 4, 4});

  CHECK(code_of([&] { load_directory_dataset(dir.path, 10); }) == ErrorCode::class_count_mismatch);
  CHECK(code_of([&] { load_directory_dataset(dir.path / "nope", 11); }) == ErrorCode::missing_class_dir);
  std::ofstream(dir.path / "state_a" / "broken.ppm") << "garbage";
  CHECK(code_of([&] { load_directory_dataset(dir.path, 11); }) == ErrorCode::unreadable_image);
}

TEST_CASE("export then load reproduces a synthetic dataset") {
  TempDir dir("byolim_test_export");
  const Dataset ds = synth_thermal_dataset(3, 4, 16, 16, 5);
  export_dataset(ds, dir.path);
  const Dataset back = load_directory_dataset(dir.path, 3);
  REQUIRE(back.size() == ds.size());
  CHECK(back.labels() == ds.labels());
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.items[i].pixels.size(); ++j)
      REQUIRE(std::abs(back.items[i].pixels[j] - ds.items[i].pixels[j]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("split_dataset: sizes, determinism and stratification") {
  const std::vector<int> labels(6400, 0);
  const DatasetSplit s = split_indices(6400, SplitFractions{}, 1);
  CHECK(s.train.size() == 5120);
  CHECK(s.val.size() == 640);
  CHECK(s.test.size() == 640);
  std::vector<std::size_t> expect(6400);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(sorted_union(s) == expect);

  const DatasetSplit again = split_indices(6400, SplitFractions{}, 1);
  CHECK(again.train == s.train);
  CHECK(split_indices(6400, SplitFractions{}, 2).train != s.train);

  std::vector<int> balanced;
  for (int c = 0; c < 11; ++c) balanced.insert(balanced.end(), 100, c);
  const DatasetSplit st = split_dataset(balanced, SplitFractions{}, 3, true);
  for (const auto& [part, want] : {std::pair{&st.train, 80}, {&st.val, 10}, {&st.test, 10}}) {
    std::vector<int> per(11, 0);
    for (std::size_t i : *part) ++per[static_cast<std::size_t>(balanced[i])];
    for (int v : per) CHECK(v == want);
  }
  CHECK(sorted_union(st).size() == 1100);
  CHECK(code_of([] { split_indices(10, SplitFractions{0.5, 0.5, 0.5}, 0); }) == ErrorCode::config_invalid);
}

TEST_CASE("kfold_plan: fold sizes and exact coverage") {
  const KFoldPlan even = kfold_plan(100, 5, 1);
  for (const auto& f : even.folds) CHECK(f.size() == 20);
  const KFoldPlan odd = kfold_plan(103, 5, 1);
  std::vector<std::size_t> sizes;
  for (const auto& f : odd.folds) sizes.push_back(f.size());
  CHECK(sizes == std::vector<std::size_t>{21, 21, 21, 20, 20});
  std::vector<int> seen(103, 0);
  for (const auto& f : odd.folds)
    for (std::size_t i : f) ++seen[i];
  for (int v : seen) CHECK(v == 1);
  const auto train0 = odd.training_indices(0);
  CHECK(train0.size() == 82);
  CHECK(std::is_sorted(train0.begin(), train0.end()));
  for (std::size_t i : odd.folds[0]) CHECK_FALSE(std::binary_search(train0.begin(), train0.end(), i));
  CHECK(code_of([] { kfold_plan(3, 5, 0); }) == ErrorCode::too_few_samples);
  CHECK(code_of([] { kfold_plan(10, 1, 0); }) == ErrorCode::config_invalid);
}

TEST_CASE("synth_thermal_dataset: counts, determinism and learnability") {
  const Dataset a = synth_thermal_dataset(11, 50, 32, 32, 7);
  CHECK(a.size() == 550);
  for (std::size_t c : a.class_counts()) CHECK(c == 50);
  for (const auto& it : a.items) {
    const auto [lo, hi] = std::minmax_element(it.pixels.data().begin(), it.pixels.data().end());
    REQUIRE(*lo >= 0.0f);
    REQUIRE(*hi <= 1.0f);
  }
  const Dataset b = synth_thermal_dataset(11, 50, 32, 32, 7);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.items[i].pixels == b.items[i].pixels);
  CHECK(synth_thermal_dataset(11, 50, 32, 32, 8).items[0].pixels != a.items[0].pixels);

  // Nearest-centroid on half the data must beat chance by a wide margin.
  const std::size_t dim = a.items[0].pixels.size();
  std::vector<std::vector<double>> centroid(11, std::vector<double>(dim, 0.0));
  std::vector<int> count(11, 0);
  for (std::size_t i = 0; i < a.size(); i += 2) {
    const auto c = static_cast<std::size_t>(a.items[i].label);
    for (std::size_t j = 0; j < dim; ++j) centroid[c][j] += a.items[i].pixels[j];
    ++count[c];
  }
  for (std::size_t c = 0; c < 11; ++c)
    for (double& v : centroid[c]) v /= count[c];
  int correct = 0, total = 0;
  for (std::size_t i = 1; i < a.size(); i += 2) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 11; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < dim; ++j) d += std::pow(a.items[i].pixels[j] - centroid[c][j], 2);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += static_cast<int>(best) == a.items[i].label ? 1 : 0;
    ++total;
  }
  CHECK(static_cast<double>(correct) / total > 3.0 / 11.0);
  CHECK(code_of([] { synth_thermal_dataset(1, 5, 32, 32, 0); }) == ErrorCode::config_invalid);
}
