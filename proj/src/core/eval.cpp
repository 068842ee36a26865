#include "byolim/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "byolim/rng.hpp"
#include "byolim/supervised.hpp"

namespace byolim {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < k; ++i) t += at(i, i);
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t k) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::length_mismatch, std::to_string(preds.size()) + " predictions for " +
                                                std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm{k, std::vector<std::size_t>(k * k, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int v : {labels[i], preds[i]}) {
      if (v < 0 || static_cast<std::size_t>(v) >= k) {
        throw Error(ErrorCode::label_out_of_range, "label " + std::to_string(v) + " outside [0, " + std::to_string(k) + ")");
      }
    }
    ++cm.counts[static_cast<std::size_t>(labels[i]) * k + static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

MetricsReport metrics_from_cm(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw Error(ErrorCode::empty_matrix, "confusion matrix has no samples");
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t c = 0; c < cm.k; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t j = 0; j < cm.k; ++j) {
      predicted += cm.at(j, c);
      actual += cm.at(c, j);
    }
    const auto tp = static_cast<double>(cm.at(c, c));
    ClassMetrics m;
    m.support = actual;
    m.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.precision_macro += m.precision;
    r.recall_macro += m.recall;
    r.f1_macro += m.f1;
    r.per_class.push_back(m);
  }
  const auto k = static_cast<double>(cm.k);
  r.precision_macro /= k;
  r.recall_macro /= k;
  r.f1_macro /= k;
  return r;
}

double binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorCode::length_mismatch, "auc scores/labels length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::degenerate_class, "AUC needs positives and negatives");
  const auto p = static_cast<double>(n_pos);
  return (rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(n_neg));
}

namespace {

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const auto n_neg = static_cast<double>(positive.size()) - n_pos;
  std::vector<RocPoint> pts{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (positive[order[i]] ? tp : fp) += 1;
    pts.push_back({fp / n_neg, tp / n_pos, s});
  }
  return pts;
}

}  // namespace

RocResult roc_auc_ovr(const Tensor& scores, std::span<const int> labels) {
  if (scores.rank() != 2) throw Error(ErrorCode::shape_mismatch, "scores must be [N, K]");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  if (labels.size() != n) throw Error(ErrorCode::length_mismatch, "scores/labels row count");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= k) throw Error(ErrorCode::label_out_of_range, "label outside score columns");
  RocResult r;
  r.auc.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.degenerate.assign(k, false);
  r.curves.resize(k);
  double sum = 0.0;
  std::size_t computed = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> col(n);
    std::vector<bool> pos(n);
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores[i * k + c];
      pos[i] = labels[i] == static_cast<int>(c);
      n_pos += pos[i];
    }
    if (n_pos == 0 || n_pos == n) {
      r.degenerate[c] = true;
      continue;
    }
    const std::unique_ptr<bool[]> flags(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) flags[i] = pos[i];
    r.auc[c] = binary_auc(col, std::span<const bool>(flags.get(), n));
    r.curves[c] = roc_curve(col, pos);
    sum += r.auc[c];
    ++computed;
  }
  if (computed == 0) throw Error(ErrorCode::degenerate_class, "no class has both positives and negatives");
  r.auc_macro = sum / static_cast<double>(computed);
  return r;
}

TimingReport summarize_timing(const std::vector<double>& batch_ms, std::size_t batch_size,
                              std::size_t warmup_batches) {
  if (batch_ms.empty() || batch_size == 0) throw Error(ErrorCode::empty_dataset, "no timed batches");
  std::vector<double> per_image;
  for (double t : batch_ms) per_image.push_back(t / static_cast<double>(batch_size));
  std::sort(per_image.begin(), per_image.end());
  // Nearest-rank percentiles.
  auto pct = [&](double q) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(per_image.size())));
    return per_image[std::clamp<std::size_t>(rank, 1, per_image.size()) - 1];
  };
  TimingReport r;
  r.mean_ms_per_image = std::accumulate(per_image.begin(), per_image.end(), 0.0) / static_cast<double>(per_image.size());
  r.p50_ms_per_image = pct(0.5);
  r.p95_ms_per_image = pct(0.95);
  r.batch_size = batch_size;
  r.warmup_batches = warmup_batches;
  r.timed_batches = batch_ms.size();
  return r;
}

TimingReport inference_timing(ClassifierModel<float>& model, const Dataset& data,
                              const std::vector<std::size_t>& indices, std::size_t batch_size,
                              std::size_t warmup, std::size_t timed_batches) {
  if (indices.empty()) throw Error(ErrorCode::empty_dataset, "nothing to time");
  if (batch_size == 0) throw Error(ErrorCode::config_invalid, "timing batch size must be positive");
  timed_batches = std::max<std::size_t>(timed_batches, 30);
  std::size_t cursor = 0;
  auto next_batch = [&] {
    std::vector<const Tensor*> imgs;
    for (std::size_t i = 0; i < batch_size; ++i) imgs.push_back(&data.items.at(indices[cursor++ % indices.size()]).pixels);
    return stack_images(imgs);
  };
  for (std::size_t i = 0; i < warmup; ++i) predict(model, next_batch());
  std::vector<double> ms;
  for (std::size_t i = 0; i < timed_batches; ++i) {
    const Tensor batch = next_batch();
    const auto t0 = std::chrono::steady_clock::now();
    predict(model, batch);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return summarize_timing(ms, batch_size, warmup);
}

MetricsReport evaluate_model(ClassifierModel<float>& model, const Dataset& data,
                             const std::vector<std::size_t>& indices, std::size_t batch_size,
                             ConfusionMatrix* cm_out, RocResult* roc_out) {
  const Prediction p = predict_indices(model, data, indices, batch_size);
  std::vector<int> labels;
  for (std::size_t i : indices) labels.push_back(data.items[i].label);
  const ConfusionMatrix cm = confusion_matrix(p.labels, labels, model.head.num_classes());
  MetricsReport r = metrics_from_cm(cm);
  RocResult roc;
  try {
    roc = roc_auc_ovr(p.probabilities, labels);
    r.auc_macro = roc.auc_macro;
    r.per_class_auc = roc.auc;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate_class) throw;
    r.auc_macro = std::numeric_limits<double>::quiet_NaN();
    r.per_class_auc.assign(cm.k, std::numeric_limits<double>::quiet_NaN());
  }
  if (cm_out) *cm_out = cm;
  if (roc_out) *roc_out = std::move(roc);
  return r;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::empty_dataset, "no reports to average");
  MetricsReport avg;
  for (const auto& r : reports) {
    avg.accuracy += r.accuracy;
    avg.precision_macro += r.precision_macro;
    avg.recall_macro += r.recall_macro;
    avg.f1_macro += r.f1_macro;
    avg.auc_macro += r.auc_macro;
  }
  const auto n = static_cast<double>(reports.size());
  avg.accuracy /= n;
  avg.precision_macro /= n;
  avg.recall_macro /= n;
  avg.f1_macro /= n;
  avg.auc_macro /= n;
  return avg;
}

KFoldResult kfold_evaluate(const Dataset& data, const KFoldPlan& plan, const TrainRecipe& recipe,
                           std::uint64_t seed, std::size_t batch_size) {
  std::size_t covered = 0;
  for (const auto& f : plan.folds) covered += f.size();
  if (plan.k() < 2 || covered != data.size()) {
    throw Error(ErrorCode::config_invalid, "k-fold plan does not cover the dataset");
  }
  KFoldResult result;
  for (std::size_t f = 0; f < plan.k(); ++f) {
    ClassifierModel<float> model = recipe(data, plan.training_indices(f), f, derive_seed(seed, "kfold.fold", f));
    result.folds.push_back(evaluate_model(model, data, plan.folds[f], batch_size));
  }
  result.average = average_reports(result.folds);
  return result;
}

}  // namespace byolim
