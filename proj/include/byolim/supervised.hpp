#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "byolim/adam.hpp"
#include "byolim/augment.hpp"
#include "byolim/data.hpp"
#include "byolim/models.hpp"

namespace byolim {

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 64;
  std::size_t early_stop_patience = 10;
  bool freeze_encoder = false;
  bool augment = true;

  void validate() const;
};

/// Validation-loss early stopping. The best epoch is the first one reaching
/// the minimum loss; training stops once `patience` epochs pass without a
/// strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records the loss of a 1-based epoch; returns true when it is the new best.
  bool update(std::size_t epoch, double val_loss);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct Prediction {
  Tensor probabilities;  // [N, K]
  std::vector<int> labels;
};

/// Minimizes sparse cross-entropy over (optionally augmented) training
/// batches, validating each epoch in eval mode, and leaves the model holding
/// the parameters of its best validation-loss epoch.
TrainResult train_classifier(ClassifierModel<float>& model, const Dataset& data,
                             const std::vector<std::size_t>& train_idx,
                             const std::vector<std::size_t>& val_idx, const TrainConfig& tcfg,
                             const AdamConfig& acfg, const AugmentationSpec& spec, std::uint64_t seed,
                             const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Eval-mode class probabilities and argmax labels (lowest index on ties).
Prediction predict(ClassifierModel<float>& model, const Tensor& batch);

/// predict() over dataset items in chunks of batch_size.
Prediction predict_indices(ClassifierModel<float>& model, const Dataset& data,
                           const std::vector<std::size_t>& indices, std::size_t batch_size = 64);

/// Mean cross-entropy and accuracy of eval-mode predictions.
struct EvalSummary {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalSummary evaluate_loss(ClassifierModel<float>& model, const Dataset& data,
                          const std::vector<std::size_t>& indices, std::size_t batch_size = 64);

}  // namespace byolim
