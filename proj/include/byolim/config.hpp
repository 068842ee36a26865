#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "byolim/adam.hpp"
#include "byolim/augment.hpp"
#include "byolim/byol.hpp"
#include "byolim/data.hpp"
#include "byolim/models.hpp"
#include "byolim/supervised.hpp"

namespace byolim {

struct DataSettings {
  std::string source = "synthetic";  // "synthetic" or a class-per-directory root
  std::size_t classes = 11;
  std::size_t per_class = 50;
  std::size_t image_size = 64;  // synthetic image side
};

struct EvalSettings {
  std::size_t batch_size = 64;
  std::size_t warmup = 3;
  std::size_t timed_batches = 30;
  std::string subset = "test";  // test, val, train or all
  std::string model;            // checkpoint to evaluate
};

struct KFoldSettings {
  std::size_t k = 5;
  std::size_t pretrain_epochs = 0;  // 0 trains each fold from scratch
};

/// Every tunable of every command. Serialized as flat `key = value` lines.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  DataSettings data;
  EncoderConfig encoder;
  MLPHeadConfig head;
  ClassifierConfig classifier;
  BYOLConfig byol;
  TrainConfig train;
  std::string init_from;
  AdamConfig adam;
  AugmentationSpec augment;
  SplitFractions split;
  bool stratified = true;
  EvalSettings eval;
  KFoldSettings kfold;
  std::vector<std::string> ablate_variants{"all"};

  /// Assigns one key; unknown keys and malformed values raise ConfigInvalid.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Cross-field checks, plus each module config's own validate().
  void validate() const;

  /// One `key = value` line per key in keys() order; doubles use the
  /// shortest representation that round-trips.
  std::string serialize() const;
  std::uint64_t hash() const;

  /// Parses `key = value` lines on top of the defaults. Blank lines and
  /// lines starting with '#' are ignored.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  void merge_text(const std::string& text);
};

std::string format_double(double v);

}  // namespace byolim
