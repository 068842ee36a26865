#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "byolim/checkpoint.hpp"
#include "byolim/config.hpp"
#include "byolim/eval.hpp"

namespace byolim {

using LogFn = std::function<void(const std::string&)>;

/// The configured dataset (synthetic or loaded from disk) at the encoder's
/// input resolution.
Dataset load_dataset(const ExperimentConfig& cfg);

/// The train/val/test split every command derives from cfg.seed.
DatasetSplit experiment_split(const ExperimentConfig& cfg, const Dataset& data);

/// BYOL pretraining on the given items; returns the final state.
BYOLState<float> pretrain_on(const ExperimentConfig& cfg, const Dataset& data, const std::vector<std::size_t>& indices,
                             std::uint64_t seed, PretrainResult* result = nullptr, const LogFn& log = {});

/// Online encoder weights renamed to the classifier's "encoder." namespace.
Checkpoint encoder_checkpoint(const BYOLState<float>& state);

struct FinetuneOutcome {
  ClassifierModel<float> model;
  TrainResult train;
};

/// Builds a classifier, optionally initializes its encoder from `init`, and
/// fine-tunes it on train/val.
FinetuneOutcome finetune_on(const ExperimentConfig& cfg, const Dataset& data, const std::vector<std::size_t>& train,
                            const std::vector<std::size_t>& val, const Checkpoint* init, std::uint64_t seed,
                            const LogFn& log = {});

struct AblationVariant {
  std::string id;
  std::string label;
  std::function<void(ExperimentConfig&)> apply;
};

/// Complete BYOL followed by each component change, in reporting order.
const std::vector<AblationVariant>& ablation_grid();

struct AblationRow {
  std::string id;
  std::string label;
  MetricsReport metrics;
  double final_pretrain_loss = 0.0;
};

// Commands. Each writes its artifacts plus manifest.cfg into cfg.out.
std::size_t run_synth_data(const ExperimentConfig& cfg, const LogFn& log = {});
PretrainResult run_pretrain(const ExperimentConfig& cfg, const LogFn& log = {});
TrainResult run_finetune(const ExperimentConfig& cfg, const LogFn& log = {});
MetricsReport run_evaluate(const ExperimentConfig& cfg, const LogFn& log = {});
KFoldResult run_kfold(const ExperimentConfig& cfg, const LogFn& log = {});
std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg, const LogFn& log = {});

}  // namespace byolim
