#include "byolim/byolim.h"

#include <cstring>
#include <fstream>
#include <mutex>
#include <new>
#include <sstream>
#include <string>

#include "byolim/commands.hpp"
#include "byolim/version.hpp"

struct byolim_config {
  byolim::ExperimentConfig cfg;
};

struct byolim_dataset {
  byolim::Dataset data;
};

struct byolim_model {
  byolim::ClassifierModel<float> model;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_kind;

std::mutex g_log_mutex;
byolim_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

byolim::LogFn logger() {
  std::lock_guard lock(g_log_mutex);
  if (!g_log_fn) return {};
  return [fn = g_log_fn, user = g_log_user](const std::string& line) { fn(line.c_str(), user); };
}

byolim_status fail(byolim_status status, const std::string& kind, const std::string& msg) {
  g_last_kind = kind;
  g_last_error = msg;
  return status;
}

template <class F>
byolim_status guarded(F&& body) {
  g_last_error.clear();
  g_last_kind.clear();
  try {
    body();
    return BYOLIM_OK;
  } catch (const byolim::Error& e) {
    return fail(static_cast<byolim_status>(byolim::error_category(e.code())), std::string(byolim::error_name(e.code())),
                e.what());
  } catch (const std::bad_alloc&) {
    return fail(BYOLIM_ERR_OTHER, "OutOfMemory", "out of memory");
  } catch (const std::exception& e) {
    return fail(BYOLIM_ERR_OTHER, "Internal", e.what());
  }
}

byolim_status null_arg(const char* what) { return fail(BYOLIM_ERR_OTHER, "InvalidArgument", std::string(what) + " is NULL"); }

byolim_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return BYOLIM_OK;
  if (cap < s.size() + 1) return fail(BYOLIM_ERR_OTHER, "BufferTooSmall", "buffer holds " + std::to_string(cap) + " bytes, need " + std::to_string(s.size() + 1));
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return BYOLIM_OK;
}

}  // namespace

extern "C" {

const char* byolim_version(void) { return byolim::kVersion; }
const char* byolim_last_error(void) { return g_last_error.c_str(); }
const char* byolim_last_error_kind(void) { return g_last_kind.c_str(); }

void byolim_set_log_callback(byolim_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

byolim_status byolim_config_new(byolim_config** out) {
  if (!out) return null_arg("out");
  return guarded([&] { *out = new byolim_config{}; });
}

void byolim_config_free(byolim_config* cfg) { delete cfg; }

byolim_status byolim_config_load(byolim_config* cfg, const char* path) {
  if (!cfg || !path) return null_arg("config or path");
  return guarded([&] {
    // Overlay onto the current values, keeping them if the file is bad.
    std::ifstream in(path);
    if (!in) throw byolim::Error(byolim::ErrorCode::config_invalid, std::string("cannot read config ") + path);
    std::stringstream ss;
    ss << in.rdbuf();
    byolim::ExperimentConfig next = cfg->cfg;
    next.merge_text(ss.str());
    cfg->cfg = std::move(next);
  });
}

byolim_status byolim_config_set(byolim_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return null_arg("config, key or value");
  return guarded([&] { cfg->cfg.set(key, value); });
}

byolim_status byolim_config_get(const byolim_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  if (!cfg || !key) return null_arg("config or key");
  std::string value;
  const byolim_status s = guarded([&] { value = cfg->cfg.get(key); });
  return s == BYOLIM_OK ? copy_out(value, buf, cap, needed) : s;
}

byolim_status byolim_config_dump(const byolim_config* cfg, char* buf, size_t cap, size_t* needed) {
  if (!cfg) return null_arg("config");
  return copy_out(cfg->cfg.serialize(), buf, cap, needed);
}

byolim_status byolim_config_validate(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { cfg->cfg.validate(); });
}

byolim_status byolim_cmd_synth_data(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { byolim::run_synth_data(cfg->cfg, logger()); });
}

byolim_status byolim_cmd_pretrain(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { byolim::run_pretrain(cfg->cfg, logger()); });
}

byolim_status byolim_cmd_finetune(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { byolim::run_finetune(cfg->cfg, logger()); });
}

byolim_status byolim_cmd_evaluate(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { byolim::run_evaluate(cfg->cfg, logger()); });
}

byolim_status byolim_cmd_kfold(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { byolim::run_kfold(cfg->cfg, logger()); });
}

byolim_status byolim_cmd_ablate(const byolim_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded([&] { byolim::run_ablate(cfg->cfg, logger()); });
}

byolim_status byolim_dataset_load(const byolim_config* cfg, byolim_dataset** out) {
  if (!cfg || !out) return null_arg("config or out");
  return guarded([&] { *out = new byolim_dataset{byolim::load_dataset(cfg->cfg)}; });
}

byolim_status byolim_dataset_synth(size_t classes, size_t per_class, size_t size, uint64_t seed, byolim_dataset** out) {
  if (!out) return null_arg("out");
  return guarded([&] { *out = new byolim_dataset{byolim::synth_thermal_dataset(classes, per_class, size, size, seed)}; });
}

void byolim_dataset_free(byolim_dataset* ds) { delete ds; }
size_t byolim_dataset_size(const byolim_dataset* ds) { return ds ? ds->data.size() : 0; }
size_t byolim_dataset_num_classes(const byolim_dataset* ds) { return ds ? ds->data.num_classes : 0; }

byolim_status byolim_dataset_image(const byolim_dataset* ds, size_t i, float* buf, size_t cap, size_t* height,
                                   size_t* width, int* label) {
  if (!ds) return null_arg("dataset");
  if (i >= ds->data.size()) return fail(BYOLIM_ERR_OTHER, "InvalidArgument", "image index " + std::to_string(i) + " out of range");
  const auto& item = ds->data.items[i];
  if (height) *height = item.pixels.dim(1);
  if (width) *width = item.pixels.dim(2);
  if (label) *label = item.label;
  if (!buf) return BYOLIM_OK;
  if (cap < item.pixels.size()) return fail(BYOLIM_ERR_OTHER, "BufferTooSmall", "image needs " + std::to_string(item.pixels.size()) + " floats");
  std::memcpy(buf, item.pixels.raw(), item.pixels.size() * sizeof(float));
  return BYOLIM_OK;
}

byolim_status byolim_model_load(const char* checkpoint_path, byolim_model** out) {
  if (!checkpoint_path || !out) return null_arg("path or out");
  return guarded([&] {
    *out = new byolim_model{byolim::classifier_from_checkpoint(byolim::load_checkpoint(checkpoint_path))};
  });
}

void byolim_model_free(byolim_model* model) { delete model; }

size_t byolim_model_num_classes(const byolim_model* model) { return model ? model->model.head.num_classes() : 0; }

size_t byolim_model_parameter_count(const byolim_model* model) {
  return model ? byolim::count_parameters(model->model) : 0;
}

byolim_status byolim_model_predict(byolim_model* model, const float* images, size_t n, size_t height, size_t width,
                                   float* probs, int* labels) {
  if (!model || !images) return null_arg("model or images");
  return guarded([&] {
    const byolim::Shape shape{n, 3, height, width};
    byolim::Tensor batch(shape, std::vector<float>(images, images + byolim::shape_size(shape)));
    const byolim::Prediction p = byolim::predict(model->model, batch);
    if (probs) std::memcpy(probs, p.probabilities.raw(), p.probabilities.size() * sizeof(float));
    if (labels) std::memcpy(labels, p.labels.data(), p.labels.size() * sizeof(int));
  });
}

}  // extern "C"
