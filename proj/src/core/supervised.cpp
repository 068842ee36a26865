#include "byolim/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace byolim {

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::config_invalid, "train batch size must be positive");
  if (early_stop_patience == 0) throw Error(ErrorCode::config_invalid, "early-stop patience must be >= 1");
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw Error(ErrorCode::config_invalid, "early-stop patience must be >= 1");
}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

namespace {

void check_labels(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t k) {
  for (std::size_t i : idx) {
    const int label = data.items.at(i).label;
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw Error(ErrorCode::label_out_of_range,
                  "label " + std::to_string(label) + " for " + std::to_string(k) + "-class head");
    }
  }
}

std::vector<int> argmax_rows(const Tensor& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (probs[r * k + j] > probs[r * k + best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

Prediction predict(ClassifierModel<float>& model, const Tensor& batch) {
  Tape<float> tape;
  Var<float> logits = model.logits(tape.constant(batch), Mode::eval, false);
  Prediction p;
  p.probabilities = softmax(logits.value());
  p.labels = argmax_rows(p.probabilities);
  return p;
}

Prediction predict_indices(ClassifierModel<float>& model, const Dataset& data,
                           const std::vector<std::size_t>& indices, std::size_t batch_size) {
  if (indices.empty()) throw Error(ErrorCode::empty_dataset, "nothing to predict");
  const std::size_t k = model.head.num_classes();
  std::vector<float> probs;
  Prediction out;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::vector<std::size_t> chunk(indices.begin() + start,
                                         indices.begin() + std::min(indices.size(), start + batch_size));
    Prediction p = predict(model, stack_images(data.images(chunk)));
    probs.insert(probs.end(), p.probabilities.data().begin(), p.probabilities.data().end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.probabilities = Tensor({indices.size(), k}, std::move(probs));
  return out;
}

EvalSummary evaluate_loss(ClassifierModel<float>& model, const Dataset& data,
                          const std::vector<std::size_t>& indices, std::size_t batch_size) {
  const Prediction p = predict_indices(model, data, indices, batch_size);
  const std::size_t k = p.probabilities.dim(1);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int label = data.items[indices[r]].label;
    const double prob = std::max(static_cast<double>(p.probabilities[r * k + static_cast<std::size_t>(label)]), 1e-30);
    loss -= std::log(prob);
    if (p.labels[r] == label) ++correct;
  }
  const auto n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train_classifier(ClassifierModel<float>& model, const Dataset& data,
                             const std::vector<std::size_t>& train_idx,
                             const std::vector<std::size_t>& val_idx, const TrainConfig& tcfg,
                             const AdamConfig& acfg, const AugmentationSpec& spec, std::uint64_t seed,
                             const std::function<void(const EpochRecord&)>& on_epoch) {
  tcfg.validate();
  spec.validate();
  if (train_idx.empty()) throw Error(ErrorCode::empty_dataset, "empty training set");
  if (val_idx.empty()) throw Error(ErrorCode::empty_dataset, "empty validation set");
  const std::size_t k = model.head.num_classes();
  check_labels(data, train_idx, k);
  check_labels(data, val_idx, k);

  for (auto* p : model.encoder.parameters()) {
    const bool stats = p->name().find(".running_") != std::string::npos;
    if (!stats) p->trainable = !tcfg.freeze_encoder;
  }
  std::vector<Parameter<float>*> params;
  for (auto* p : model.parameters())
    if (p->trainable) params.push_back(p);
  const auto all_params = model.parameters();

  Adam<float> optimizer(acfg);
  EarlyStopping stopper(tcfg.early_stop_patience);
  std::vector<Tensor> best;
  TrainResult result;
  std::vector<std::size_t> order = train_idx;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    Rng shuffle_rng = make_rng(seed, "train.shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      Rng aug_rng = make_rng(seed, "train.augment", step++);
      std::vector<Tensor> views;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledImage& item = data.items[order[i]];
        views.push_back(tcfg.augment ? augment(item.pixels, spec, aug_rng) : item.pixels);
        labels.push_back(item.label);
      }
      std::vector<const Tensor*> ptrs;
      for (const auto& v : views) ptrs.push_back(&v);
      Tape<float> tape;
      Var<float> input = tape.constant(stack_images(ptrs));
      // A frozen encoder is a fixed feature extractor: eval statistics, no updates.
      Var<float> logits = tcfg.freeze_encoder
                              ? model.head.forward(model.encoder.forward(input, Mode::eval, false, true))
                              : model.logits(input, Mode::train, true);
      Var<float> loss = sparse_cross_entropy(logits, std::span<const int>(labels));
      loss_sum += static_cast<double>(loss.value().item()) * static_cast<double>(labels.size());
      seen += labels.size();
      optimizer.step(params, tape.backward(loss));
    }

    const EvalSummary val = evaluate_loss(model, data, val_idx, tcfg.batch_size);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val.loss, val.accuracy};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(epoch, val.loss)) {
      best.clear();
      for (const auto* p : all_params) best.push_back(p->value);
    }
    if (stopper.should_stop()) {
      result.stopped_early = epoch < tcfg.max_epochs;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  if (!best.empty()) {
    for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best[i];
  }
  return result;
}

}  // namespace byolim
