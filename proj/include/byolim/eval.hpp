#pragma once

#include <functional>
#include <span>
#include <vector>

#include "byolim/data.hpp"
#include "byolim/models.hpp"

namespace byolim {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::size_t> counts;  // row-major k*k

  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
  std::size_t total() const;
  std::size_t trace() const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  double auc_macro = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<double> per_class_auc;  // NaN where the class is degenerate
};

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t k);

/// Per-class and macro precision/recall/F1. A zero denominator yields 0.
/// auc fields are left at their defaults.
MetricsReport metrics_from_cm(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  std::vector<double> auc;  // NaN for skipped classes
  std::vector<bool> degenerate;
  double auc_macro = 0.0;
  std::vector<std::vector<RocPoint>> curves;  // empty for skipped classes
};

/// Mann-Whitney AUC with midranks for ties.
double binary_auc(std::span<const double> scores, std::span<const bool> positive);

/// One-vs-rest AUC and ROC points per class. Classes lacking positives or
/// negatives are skipped and flagged; the macro mean covers the rest. If no
/// class is computable DegenerateClass is thrown.
RocResult roc_auc_ovr(const Tensor& scores, std::span<const int> labels);

struct TimingReport {
  double mean_ms_per_image = 0.0;
  double p50_ms_per_image = 0.0;
  double p95_ms_per_image = 0.0;
  std::size_t batch_size = 0;
  std::size_t warmup_batches = 0;
  std::size_t timed_batches = 0;
};

/// Per-image statistics from raw batch durations (each divided by batch size).
TimingReport summarize_timing(const std::vector<double>& batch_ms, std::size_t batch_size,
                              std::size_t warmup_batches);

/// Times eval-mode forward passes over batches cycled from the dataset.
/// Warmup batches run first and are discarded.
TimingReport inference_timing(ClassifierModel<float>& model, const Dataset& data,
                              const std::vector<std::size_t>& indices, std::size_t batch_size = 64,
                              std::size_t warmup = 3, std::size_t timed_batches = 30);

/// Full report (metrics plus AUC) for a model over the given items.
MetricsReport evaluate_model(ClassifierModel<float>& model, const Dataset& data,
                             const std::vector<std::size_t>& indices, std::size_t batch_size = 64,
                             ConfusionMatrix* cm_out = nullptr, RocResult* roc_out = nullptr);

/// Trains a model on `train` and returns it ready for evaluation.
using TrainRecipe = std::function<ClassifierModel<float>(const Dataset& data, const std::vector<std::size_t>& train,
                                                         std::size_t fold, std::uint64_t fold_seed)>;

struct KFoldResult {
  std::vector<MetricsReport> folds;
  MetricsReport average;  // unweighted mean of the fold rows (macro fields only)
};

/// Mean of accuracy/precision/recall/F1/AUC over reports.
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

KFoldResult kfold_evaluate(const Dataset& data, const KFoldPlan& plan, const TrainRecipe& recipe,
                           std::uint64_t seed, std::size_t batch_size = 64);

}  // namespace byolim
