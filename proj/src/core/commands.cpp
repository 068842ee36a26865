#include "byolim/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "byolim/version.hpp"

namespace fs = std::filesystem;

namespace byolim {

namespace {

// Reference inference time on the original hardware, kept as metadata next to desk timings.
constexpr double kReferenceMsPerImage = 5.7;

void emit(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  const fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error(ErrorCode::io_error, "cannot create output directory " + out.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

// The manifest is itself a loadable config: results live in '#' lines.
void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const std::vector<std::string>& results) {
  std::ostringstream m;
  m << "# byolim " << kVersion << " manifest\n";
  m << "# command: " << command << "\n";
  m << "# config_hash: " << std::hex << cfg.hash() << std::dec << "\n";
  for (const auto& r : results) m << "# " << r << "\n";
  m << cfg.serialize();
  write_text(dir / "manifest.cfg", m.str());
}

std::string csv_double(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")); }

nlohmann::ordered_json json_double(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::vector<std::size_t> all_indices(const Dataset& data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::vector<std::size_t> subset_indices(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.eval.subset == "all") return all_indices(data);
  const DatasetSplit split = experiment_split(cfg, data);
  if (cfg.eval.subset == "train") return split.train;
  if (cfg.eval.subset == "val") return split.val;
  return split.test;
}

void write_history(const fs::path& path, const TrainResult& r) {
  std::string csv = "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& e : r.history) {
    csv += std::to_string(e.epoch) + "," + csv_double(e.train_loss) + "," + csv_double(e.val_loss) + "," +
           csv_double(e.val_accuracy) + "\n";
  }
  write_text(path, csv);
}

std::string metrics_row(const MetricsReport& m) {
  return csv_double(m.accuracy) + "," + csv_double(m.precision_macro) + "," + csv_double(m.recall_macro) + "," +
         csv_double(m.f1_macro) + "," + csv_double(m.auc_macro);
}

void put_metrics(nlohmann::ordered_json& j, const MetricsReport& m, const std::vector<std::string>& class_names) {
  j["accuracy"] = json_double(m.accuracy);
  j["precision_macro"] = json_double(m.precision_macro);
  j["recall_macro"] = json_double(m.recall_macro);
  j["f1_macro"] = json_double(m.f1_macro);
  j["auc_macro"] = json_double(m.auc_macro);
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    nlohmann::ordered_json row;
    row["class"] = c < class_names.size() ? class_names[c] : std::to_string(c);
    row["precision"] = json_double(m.per_class[c].precision);
    row["recall"] = json_double(m.per_class[c].recall);
    row["f1"] = json_double(m.per_class[c].f1);
    row["support"] = m.per_class[c].support;
    row["auc"] = json_double(c < m.per_class_auc.size() ? m.per_class_auc[c] : std::nan(""));
    per_class.push_back(row);
  }
  j["per_class"] = per_class;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg) {
  const std::size_t side = cfg.encoder.input_height;
  Dataset data;
  if (cfg.data.source == "synthetic") {
    data = synth_thermal_dataset(cfg.data.classes, cfg.data.per_class, cfg.data.image_size, cfg.data.image_size,
                                 derive_seed(cfg.seed, "data"));
    if (cfg.data.image_size != side || cfg.encoder.input_width != side) {
      for (auto& item : data.items) item.pixels = resize_bilinear(item.pixels, side, cfg.encoder.input_width);
    }
  } else {
    data = load_directory_dataset(cfg.data.source, cfg.data.classes,
                                  std::array<std::size_t, 2>{side, cfg.encoder.input_width});
  }
  if (data.size() == 0) throw Error(ErrorCode::empty_dataset, "dataset " + cfg.data.source + " has no images");
  return data;
}

DatasetSplit experiment_split(const ExperimentConfig& cfg, const Dataset& data) {
  return split_dataset(data.labels(), cfg.split, derive_seed(cfg.seed, "split"), cfg.stratified);
}

BYOLState<float> pretrain_on(const ExperimentConfig& cfg, const Dataset& data, const std::vector<std::size_t>& indices,
                             std::uint64_t seed, PretrainResult* result, const LogFn& log) {
  Rng init_rng = make_rng(seed, "init.byol");
  BYOLState<float> state = init_byol<float>(cfg.encoder, cfg.head, cfg.byol, init_rng);
  const PretrainResult r = pretrain(state, data.images(indices), cfg.augment, cfg.adam, derive_seed(seed, "pretrain"),
                                    [&](std::size_t epoch, double loss) {
                                      emit(log, "pretrain epoch " + std::to_string(epoch) + " loss " + format_double(loss));
                                    });
  if (result) *result = r;
  return state;
}

Checkpoint encoder_checkpoint(const BYOLState<float>& state) {
  return make_checkpoint(state.online.encoder.parameters(), "online.");
}

FinetuneOutcome finetune_on(const ExperimentConfig& cfg, const Dataset& data, const std::vector<std::size_t>& train,
                            const std::vector<std::size_t>& val, const Checkpoint* init, std::uint64_t seed,
                            const LogFn& log) {
  Rng init_rng = make_rng(seed, "init.classifier");
  FinetuneOutcome out{ClassifierModel<float>::build(cfg.encoder, cfg.classifier, init_rng), {}};
  if (init) {
    const std::size_t n = apply_checkpoint(*init, out.model.parameters(), true);
    emit(log, "initialized " + std::to_string(n) + " tensors from checkpoint");
  }
  out.train = train_classifier(out.model, data, train, val, cfg.train, cfg.adam, cfg.augment,
                               derive_seed(seed, "finetune"), [&](const EpochRecord& e) {
                                 emit(log, "finetune epoch " + std::to_string(e.epoch) + " train_loss " +
                                               format_double(e.train_loss) + " val_loss " + format_double(e.val_loss) +
                                               " val_acc " + format_double(e.val_accuracy));
                               });
  return out;
}

const std::vector<AblationVariant>& ablation_grid() {
  static const std::vector<AblationVariant> grid = {
      {"complete", "Complete BYOL", [](ExperimentConfig&) {}},
      {"no-target", "Without Target Network", [](ExperimentConfig& c) { c.byol.use_target_network = false; }},
      {"no-momentum", "Without Momentum Encoder", [](ExperimentConfig& c) { c.byol.use_momentum = false; }},
      {"no-predictor", "Without Predictor Network", [](ExperimentConfig& c) { c.byol.use_predictor = false; }},
      {"proj-128", "Small Projection Dimension (128)", [](ExperimentConfig& c) { c.byol.projection_dim = 128; }},
      {"proj-512", "Large Projection Dimension (512)", [](ExperimentConfig& c) { c.byol.projection_dim = 512; }},
      {"tau-0.90", "Low EMA Decay (tau = 0.90)", [](ExperimentConfig& c) { c.byol.tau = 0.90; }},
      {"tau-0.999", "High EMA Decay (tau = 0.999)", [](ExperimentConfig& c) { c.byol.tau = 0.999; }},
      {"aug-limited", "Limited Augmentations", [](ExperimentConfig& c) { c.augment = AugmentationSpec::limited(); }},
      {"aug-extended", "Extended Augmentations", [](ExperimentConfig& c) { c.augment = AugmentationSpec::extended(); }},
  };
  return grid;
}

std::size_t run_synth_data(const ExperimentConfig& cfg, const LogFn& log) {
  const Dataset data = synth_thermal_dataset(cfg.data.classes, cfg.data.per_class, cfg.data.image_size,
                                             cfg.data.image_size, derive_seed(cfg.seed, "data"));
  const fs::path out = prepare_out(cfg);
  export_dataset(data, out);
  write_manifest(out, "synth-data", cfg,
                 {"images: " + std::to_string(data.size()), "classes: " + std::to_string(data.num_classes)});
  emit(log, "wrote " + std::to_string(data.size()) + " images to " + out.string());
  return data.size();
}

PretrainResult run_pretrain(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const DatasetSplit split = experiment_split(cfg, data);
  const fs::path out = prepare_out(cfg);
  PretrainResult result;
  const BYOLState<float> state = pretrain_on(cfg, data, split.train, cfg.seed, &result, log);
  save_checkpoint(out / "encoder.ckpt", encoder_checkpoint(state));
  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    csv += std::to_string(e + 1) + "," + csv_double(result.epoch_loss[e]) + "\n";
  write_text(out / "pretrain_loss.csv", csv);
  write_manifest(out, "pretrain", cfg,
                 {"epochs_completed: " + std::to_string(result.epoch_loss.size()),
                  "steps: " + std::to_string(result.steps), "images: " + std::to_string(split.train.size())});
  return result;
}

TrainResult run_finetune(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const DatasetSplit split = experiment_split(cfg, data);
  std::optional<Checkpoint> init;
  if (!cfg.init_from.empty()) init = load_checkpoint(cfg.init_from);
  const fs::path out = prepare_out(cfg);
  FinetuneOutcome r = finetune_on(cfg, data, split.train, split.val, init ? &*init : nullptr, cfg.seed, log);
  save_checkpoint(out / "model.ckpt", make_checkpoint(std::as_const(r.model).parameters()));
  write_history(out / "history.csv", r.train);
  write_manifest(out, "finetune", cfg,
                 {"epochs_completed: " + std::to_string(r.train.history.size()),
                  "best_epoch: " + std::to_string(r.train.best_epoch),
                  "stopped_early: " + std::string(r.train.stopped_early ? "true" : "false")});
  return r.train;
}

MetricsReport run_evaluate(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  const fs::path model_path = cfg.eval.model.empty() ? fs::path(cfg.out) / "model.ckpt" : fs::path(cfg.eval.model);
  ClassifierModel<float> model = classifier_from_checkpoint(load_checkpoint(model_path), cfg.encoder.input_height);
  const Dataset data = load_dataset(cfg);
  if (model.head.num_classes() != data.num_classes) {
    throw Error(ErrorCode::checkpoint_incompatible, "checkpoint predicts " + std::to_string(model.head.num_classes()) +
                                                        " classes, dataset has " + std::to_string(data.num_classes));
  }
  const std::vector<std::size_t> idx = subset_indices(cfg, data);
  ConfusionMatrix cm;
  RocResult roc;
  const MetricsReport m = evaluate_model(model, data, idx, cfg.eval.batch_size, &cm, &roc);
  emit(log, "accuracy " + format_double(m.accuracy) + " on " + std::to_string(idx.size()) + " " + cfg.eval.subset +
                " images");
  const TimingReport t = inference_timing(model, data, idx, cfg.eval.batch_size, cfg.eval.warmup, cfg.eval.timed_batches);
  const fs::path out = prepare_out(cfg);

  nlohmann::ordered_json j;
  j["subset"] = cfg.eval.subset;
  j["samples"] = idx.size();
  put_metrics(j, m, data.class_names);
  nlohmann::ordered_json degenerate = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < roc.degenerate.size(); ++c)
    if (roc.degenerate[c]) degenerate.push_back(data.class_names[c]);
  j["degenerate_classes"] = degenerate;
  const std::size_t params = count_parameters(std::as_const(model));
  const auto bytes = static_cast<std::size_t>(fs::file_size(model_path));
  j["parameter_count"] = params;
  j["parameters_millions"] = static_cast<double>(params) / 1e6;
  j["checkpoint_bytes"] = bytes;
  j["checkpoint_mb"] = static_cast<double>(bytes) / (1024.0 * 1024.0);
  nlohmann::ordered_json timing;
  timing["mean_ms_per_image"] = t.mean_ms_per_image;
  timing["p50_ms_per_image"] = t.p50_ms_per_image;
  timing["p95_ms_per_image"] = t.p95_ms_per_image;
  timing["batch_size"] = t.batch_size;
  timing["warmup_batches"] = t.warmup_batches;
  timing["timed_batches"] = t.timed_batches;
  timing["reference_ms_per_image"] = kReferenceMsPerImage;
  j["timing"] = timing;
  write_text(out / "metrics.json", j.dump(2) + "\n");

  std::string cm_csv = "true\\pred";
  for (const auto& name : data.class_names) cm_csv += "," + name;
  cm_csv += "\n";
  for (std::size_t r = 0; r < cm.k; ++r) {
    cm_csv += data.class_names[r];
    for (std::size_t c = 0; c < cm.k; ++c) cm_csv += "," + std::to_string(cm.at(r, c));
    cm_csv += "\n";
  }
  write_text(out / "confusion.csv", cm_csv);

  std::string roc_csv = "class,fpr,tpr,threshold\n";
  for (std::size_t c = 0; c < roc.curves.size(); ++c)
    for (const auto& p : roc.curves[c])
      roc_csv += data.class_names[c] + "," + csv_double(p.fpr) + "," + csv_double(p.tpr) + "," + csv_double(p.threshold) + "\n";
  write_text(out / "roc.csv", roc_csv);

  write_manifest(out, "evaluate", cfg, {"model: " + model_path.string(), "samples: " + std::to_string(idx.size())});
  return m;
}

KFoldResult run_kfold(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const KFoldPlan plan = kfold_plan(data.size(), cfg.kfold.k, derive_seed(cfg.seed, "kfold"));
  const double inner_val = cfg.split.val / (cfg.split.train + cfg.split.val);
  if (!(inner_val > 0.0 && inner_val < 1.0)) throw Error(ErrorCode::config_invalid, "k-fold needs split.train and split.val > 0");
  ExperimentConfig pre_cfg = cfg;
  pre_cfg.byol.epochs = cfg.kfold.pretrain_epochs;

  const TrainRecipe recipe = [&](const Dataset& d, const std::vector<std::size_t>& train, std::size_t fold,
                                 std::uint64_t fold_seed) {
    emit(log, "fold " + std::to_string(fold + 1) + "/" + std::to_string(plan.k()));
    std::vector<int> labels;
    for (std::size_t i : train) labels.push_back(d.items[i].label);
    const DatasetSplit inner = split_dataset(labels, {1.0 - inner_val, inner_val, 0.0},
                                             derive_seed(fold_seed, "inner"), cfg.stratified);
    std::vector<std::size_t> tr, va;
    for (std::size_t i : inner.train) tr.push_back(train[i]);
    for (std::size_t i : inner.val) va.push_back(train[i]);
    std::optional<Checkpoint> init;
    if (cfg.kfold.pretrain_epochs > 0) init = encoder_checkpoint(pretrain_on(pre_cfg, d, tr, fold_seed, nullptr, log));
    return finetune_on(cfg, d, tr, va, init ? &*init : nullptr, fold_seed, log).model;
  };
  const KFoldResult r = kfold_evaluate(data, plan, recipe, cfg.seed, cfg.eval.batch_size);

  const fs::path out = prepare_out(cfg);
  std::string csv = "Fold,Accuracy,Precision,Recall,F1,AUC\n";
  for (std::size_t f = 0; f < r.folds.size(); ++f) csv += std::to_string(f + 1) + "," + metrics_row(r.folds[f]) + "\n";
  csv += "Average," + metrics_row(r.average) + "\n";
  write_text(out / "kfold.csv", csv);

  nlohmann::ordered_json j;
  j["k"] = plan.k();
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    nlohmann::ordered_json row;
    row["fold"] = f + 1;
    row["samples"] = plan.folds[f].size();
    put_metrics(row, r.folds[f], data.class_names);
    folds.push_back(row);
  }
  j["folds"] = folds;
  nlohmann::ordered_json avg;
  avg["accuracy"] = json_double(r.average.accuracy);
  avg["precision_macro"] = json_double(r.average.precision_macro);
  avg["recall_macro"] = json_double(r.average.recall_macro);
  avg["f1_macro"] = json_double(r.average.f1_macro);
  avg["auc_macro"] = json_double(r.average.auc_macro);
  j["average"] = avg;
  write_text(out / "kfold.json", j.dump(2) + "\n");
  write_manifest(out, "kfold", cfg, {"folds: " + std::to_string(plan.k())});
  return r;
}

std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  std::vector<const AblationVariant*> selected;
  const bool all = cfg.ablate_variants.size() == 1 && cfg.ablate_variants[0] == "all";
  for (const auto& v : ablation_grid()) {
    if (all || std::find(cfg.ablate_variants.begin(), cfg.ablate_variants.end(), v.id) != cfg.ablate_variants.end())
      selected.push_back(&v);
  }
  for (const auto& name : cfg.ablate_variants) {
    if (name == "all") continue;
    const bool known = std::any_of(ablation_grid().begin(), ablation_grid().end(),
                                   [&](const AblationVariant& v) { return v.id == name; });
    if (!known) throw Error(ErrorCode::config_invalid, "unknown ablation variant '" + name + "'");
  }
  if (selected.empty()) throw Error(ErrorCode::config_invalid, "no ablation variants selected");

  const Dataset data = load_dataset(cfg);
  const DatasetSplit split = experiment_split(cfg, data);
  const fs::path out = prepare_out(cfg);
  std::vector<AblationRow> rows;
  for (const auto* v : selected) {
    emit(log, "ablation " + v->id);
    ExperimentConfig vc = cfg;
    v->apply(vc);
    vc.validate();
    PretrainResult pr;
    const Checkpoint enc = encoder_checkpoint(pretrain_on(vc, data, split.train, cfg.seed, &pr, log));
    FinetuneOutcome ft = finetune_on(vc, data, split.train, split.val, &enc, cfg.seed, log);
    AblationRow row{v->id, v->label, evaluate_model(ft.model, data, split.test, cfg.eval.batch_size),
                    pr.epoch_loss.empty() ? std::nan("") : pr.epoch_loss.back()};
    emit(log, v->id + " accuracy " + format_double(row.metrics.accuracy));
    rows.push_back(std::move(row));
  }
  std::string csv = "Variant,Configuration,Accuracy,Precision,Recall,F1,AUC,FinalPretrainLoss\n";
  for (const auto& r : rows) csv += r.id + "," + r.label + "," + metrics_row(r.metrics) + "," + csv_double(r.final_pretrain_loss) + "\n";
  write_text(out / "ablation.csv", csv);
  write_manifest(out, "ablate", cfg, {"variants: " + std::to_string(rows.size())});
  return rows;
}

}  // namespace byolim
