#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "byolim/eval.hpp"
#include "test_support.hpp"

using namespace byolim;

namespace {

// Pair-counting AUC: P(score_pos > score_neg) + 0.5 P(tie).
double pair_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("confusion_matrix examples") {
  const std::vector<int> labels{0, 1, 2, 1};
  const ConfusionMatrix perfect = confusion_matrix(labels, labels, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(perfect.at(i, j) == (i == j ? (i == 1 ? 2u : 1u) : 0u));
  const ConfusionMatrix cm = confusion_matrix(std::vector<int>{1, 1}, std::vector<int>{0, 1}, 2);
  CHECK(cm.counts == std::vector<std::size_t>{0, 1, 0, 1});
  const ConfusionMatrix empty = confusion_matrix({}, {}, 4);
  CHECK(empty.total() == 0);
  CHECK(empty.counts.size() == 16);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}, 2), Error);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{2}, std::vector<int>{0}, 2), Error);
  CHECK_THROWS_AS(metrics_from_cm(empty), Error);
}

TEST_CASE("metrics_from_cm examples") {
  const std::vector<int> labels{0, 1, 2, 2};
  const MetricsReport perfect = metrics_from_cm(confusion_matrix(labels, labels, 3));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision_macro == 1.0);
  CHECK(perfect.recall_macro == 1.0);
  CHECK(perfect.f1_macro == 1.0);

  ConfusionMatrix cm{2, {1, 1, 0, 2}};
  const MetricsReport r = metrics_from_cm(cm);
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.per_class[0].precision == doctest::Approx(1.0));
  CHECK(r.per_class[0].recall == doctest::Approx(0.5));
  CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].recall == doctest::Approx(1.0));
  CHECK(r.per_class[1].f1 == doctest::Approx(0.8));
  CHECK(r.f1_macro == doctest::Approx(0.7333333333));
  CHECK(r.per_class[0].support == 2);

  // A never-predicted class has zero precision rather than NaN.
  ConfusionMatrix skew{2, {0, 3, 0, 1}};
  const MetricsReport s = metrics_from_cm(skew);
  CHECK(s.per_class[0].precision == 0.0);
  CHECK(s.per_class[0].f1 == 0.0);
}

TEST_CASE("metrics agree with a per-sample recount on random instances") {
  std::mt19937_64 g(1);
  std::uniform_int_distribution<int> nd(1, 50), kd(2, 11);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = nd(g), k = kd(g);
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::vector<int> preds(static_cast<std::size_t>(n)), labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      labels[static_cast<std::size_t>(i)] = cls(g);
      preds[static_cast<std::size_t>(i)] = std::bernoulli_distribution(0.6)(g) ? labels[static_cast<std::size_t>(i)] : cls(g);
    }
    const ConfusionMatrix cm = confusion_matrix(preds, labels, static_cast<std::size_t>(k));
    const MetricsReport r = metrics_from_cm(cm);
    int correct = 0;
    double p_sum = 0, r_sum = 0, f_sum = 0;
    for (int c = 0; c < k; ++c) {
      int tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        const int p = preds[static_cast<std::size_t>(i)], l = labels[static_cast<std::size_t>(i)];
        REQUIRE(cm.at(static_cast<std::size_t>(l), static_cast<std::size_t>(p)) >= 1);
        tp += p == c && l == c;
        fp += p == c && l != c;
        fn += p != c && l == c;
      }
      correct += tp;
      const double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
      const double rec = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
      const double f1 = prec + rec == 0 ? 0.0 : 2 * prec * rec / (prec + rec);
      const auto& m = r.per_class[static_cast<std::size_t>(c)];
      REQUIRE(m.precision == prec);
      REQUIRE(m.recall == rec);
      REQUIRE(m.f1 == f1);
      REQUIRE(m.support == static_cast<std::size_t>(tp + fn));
      p_sum += prec;
      r_sum += rec;
      f_sum += f1;
    }
    REQUIRE(r.accuracy == static_cast<double>(correct) / n);
    REQUIRE(r.precision_macro == doctest::Approx(p_sum / k).epsilon(1e-14));
    REQUIRE(r.recall_macro == doctest::Approx(r_sum / k).epsilon(1e-14));
    REQUIRE(r.f1_macro == doctest::Approx(f_sum / k).epsilon(1e-14));
    REQUIRE(cm.total() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("AUC agrees with pair counting on random instances") {
  std::mt19937_64 g(2);
  std::uniform_int_distribution<int> nd(2, 50), kd(2, 11), level(0, 6);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(nd(g));
    const auto k = static_cast<std::size_t>(kd(g));
    std::uniform_int_distribution<int> cls(0, static_cast<int>(k) - 1);
    std::vector<int> labels(n);
    for (int& l : labels) l = cls(g);
    Tensor scores({n, k});
    // Coarse score levels force ties.
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<float>(level(g)) / 6.0f;
    bool any = false;
    for (std::size_t c = 0; c < k && !any; ++c) {
      std::size_t p = 0;
      for (int l : labels) p += static_cast<std::size_t>(l) == c;
      any = p > 0 && p < n;
    }
    if (!any) {
      CHECK_THROWS_AS(roc_auc_ovr(scores, labels), Error);
      continue;
    }
    const RocResult roc = roc_auc_ovr(scores, labels);
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> s(n);
      std::vector<bool> pos(n);
      std::size_t p = 0;
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = scores[i * k + c];
        pos[i] = static_cast<std::size_t>(labels[i]) == c;
        p += pos[i];
      }
      if (p == 0 || p == n) {
        REQUIRE(roc.degenerate[c]);
        REQUIRE(std::isnan(roc.auc[c]));
        continue;
      }
      const double expect = pair_auc(s, pos);
      REQUIRE(roc.auc[c] == expect);
      std::unique_ptr<bool[]> flags(new bool[n]);
      for (std::size_t i = 0; i < n; ++i) flags[i] = pos[i];
      REQUIRE(binary_auc(s, std::span<const bool>(flags.get(), n)) == expect);
      sum += expect;
      ++used;
      ++checked;
    }
    REQUIRE(roc.auc_macro == doctest::Approx(sum / static_cast<double>(used)).epsilon(1e-14));
  }
  CHECK(checked > 1000);
}

TEST_CASE("AUC examples and ROC curve shape") {
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  Tensor perfect({6, 3}, 0.0f);
  for (std::size_t i = 0; i < 6; ++i) perfect[i * 3 + static_cast<std::size_t>(labels[i])] = 0.9f;
  const RocResult r = roc_auc_ovr(perfect, labels);
  for (double a : r.auc) CHECK(a == 1.0);
  CHECK(r.auc_macro == 1.0);
  const auto& curve = r.curves[0];
  CHECK(curve.front().fpr == 0.0);
  CHECK(curve.front().tpr == 0.0);
  CHECK(curve.back().fpr == 1.0);
  CHECK(curve.back().tpr == 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].fpr >= curve[i - 1].fpr);
    CHECK(curve[i].tpr >= curve[i - 1].tpr);
  }

  const RocResult flat = roc_auc_ovr(Tensor({6, 3}, 0.25f), labels);
  for (double a : flat.auc) CHECK(a == 0.5);

  const bool none[] = {true, true};
  const double s2[] = {0.1, 0.2};
  CHECK_THROWS_AS(binary_auc(s2, none), Error);
}

TEST_CASE("timing summary arithmetic") {
  std::vector<double> batch_ms;
  for (int i = 1; i <= 40; ++i) batch_ms.push_back(64.0 * i);
  const TimingReport t = summarize_timing(batch_ms, 64, 3);
  CHECK(t.mean_ms_per_image == doctest::Approx(20.5));
  CHECK(t.p50_ms_per_image == doctest::Approx(20.0));
  CHECK(t.p95_ms_per_image == doctest::Approx(38.0));
  CHECK(t.timed_batches == 40);
  CHECK(t.warmup_batches == 3);
  CHECK(t.batch_size == 64);
  CHECK_THROWS_AS(summarize_timing({}, 64, 0), Error);
}

TEST_CASE("inference_timing, evaluate_model and kfold_evaluate") {
  const Dataset data = synth_thermal_dataset(3, 6, 16, 16, 4);
  EncoderConfig enc;
  enc.input_height = enc.input_width = 16;
  enc.block_channels = {4, 4, 8, 8};
  ClassifierConfig cls;
  cls.num_classes = 3;
  cls.hidden_dims = {8};
  Rng rng(5);
  auto model = ClassifierModel<float>::build(enc, cls, rng);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  const TimingReport t = inference_timing(model, data, all, 8, 1, 5);
  CHECK(t.timed_batches >= 30);
  CHECK(t.mean_ms_per_image > 0.0);
  CHECK(t.p50_ms_per_image <= t.p95_ms_per_image);

  ConfusionMatrix cm;
  RocResult roc;
  const MetricsReport m = evaluate_model(model, data, all, 7, &cm, &roc);
  CHECK(cm.total() == data.size());
  CHECK(m.accuracy == doctest::Approx(static_cast<double>(cm.trace()) / static_cast<double>(cm.total())));
  CHECK(m.auc_macro == roc.auc_macro);

  const KFoldPlan plan = kfold_plan(data.size(), 3, 1);
  std::vector<int> evaluated(data.size(), 0);
  std::vector<std::uint64_t> seeds;
  const KFoldResult kr = kfold_evaluate(
      data, plan,
      [&](const Dataset&, const std::vector<std::size_t>& train, std::size_t fold, std::uint64_t fold_seed) {
        for (std::size_t i : plan.folds[fold]) {
          ++evaluated[i];
          CHECK_FALSE(std::binary_search(train.begin(), train.end(), i));
        }
        seeds.push_back(fold_seed);
        Rng r(fold_seed);
        return ClassifierModel<float>::build(enc, cls, r);
      },
      9);
  for (int v : evaluated) CHECK(v == 1);
  CHECK(seeds.size() == 3);
  CHECK(seeds[0] != seeds[1]);
  REQUIRE(kr.folds.size() == 3);
  double acc = 0, f1 = 0, auc = 0;
  for (const auto& f : kr.folds) {
    acc += f.accuracy;
    f1 += f.f1_macro;
    auc += f.auc_macro;
  }
  CHECK(std::abs(kr.average.accuracy - acc / 3) <= 1e-9);
  CHECK(std::abs(kr.average.f1_macro - f1 / 3) <= 1e-9);
  CHECK(std::abs(kr.average.auc_macro - auc / 3) <= 1e-9);
  CHECK_THROWS_AS(kfold_evaluate(data, kfold_plan(10, 2, 0), {}, 0), Error);
}
