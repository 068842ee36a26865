/* byolim C API: BYOL pretraining and CNN fault classification. */
#ifndef BYOLIM_BYOLIM_H
#define BYOLIM_BYOLIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(BYOLIM_BUILDING_LIBRARY)
#define BYOLIM_API __declspec(dllexport)
#else
#define BYOLIM_API __declspec(dllimport)
#endif
#else
#define BYOLIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes. */
typedef enum byolim_status {
  BYOLIM_OK = 0,
  BYOLIM_ERR_OTHER = 1,
  BYOLIM_ERR_CONFIG = 2,
  BYOLIM_ERR_DATA = 3,
  BYOLIM_ERR_CHECKPOINT = 4
} byolim_status;

typedef struct byolim_config byolim_config;
typedef struct byolim_dataset byolim_dataset;
typedef struct byolim_model byolim_model;

/* Receives progress lines from long-running commands. */
typedef void (*byolim_log_fn)(const char* line, void* user);

BYOLIM_API const char* byolim_version(void);

/* Message of the last failure on the calling thread ("" if none). */
BYOLIM_API const char* byolim_last_error(void);

/* Name of the last failure's error kind, e.g. "CheckpointIncompatible". */
BYOLIM_API const char* byolim_last_error_kind(void);

BYOLIM_API void byolim_set_log_callback(byolim_log_fn fn, void* user);

/* Configuration (defaults filled in). */
BYOLIM_API byolim_status byolim_config_new(byolim_config** out);
BYOLIM_API void byolim_config_free(byolim_config* cfg);
/* Overlays `key = value` lines from a file. */
BYOLIM_API byolim_status byolim_config_load(byolim_config* cfg, const char* path);
BYOLIM_API byolim_status byolim_config_set(byolim_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated). *needed receives the full
 * length including the terminator; pass buf=NULL to query it. */
BYOLIM_API byolim_status byolim_config_get(const byolim_config* cfg, const char* key, char* buf, size_t cap,
                                           size_t* needed);
BYOLIM_API byolim_status byolim_config_dump(const byolim_config* cfg, char* buf, size_t cap, size_t* needed);
BYOLIM_API byolim_status byolim_config_validate(const byolim_config* cfg);

/* Commands; artifacts go to the configured `out` directory. */
BYOLIM_API byolim_status byolim_cmd_synth_data(const byolim_config* cfg);
BYOLIM_API byolim_status byolim_cmd_pretrain(const byolim_config* cfg);
BYOLIM_API byolim_status byolim_cmd_finetune(const byolim_config* cfg);
BYOLIM_API byolim_status byolim_cmd_evaluate(const byolim_config* cfg);
BYOLIM_API byolim_status byolim_cmd_kfold(const byolim_config* cfg);
BYOLIM_API byolim_status byolim_cmd_ablate(const byolim_config* cfg);

/* Datasets: images are 3 x H x W floats in [0, 1], channel-major. */
BYOLIM_API byolim_status byolim_dataset_load(const byolim_config* cfg, byolim_dataset** out);
BYOLIM_API byolim_status byolim_dataset_synth(size_t classes, size_t per_class, size_t size, uint64_t seed,
                                              byolim_dataset** out);
BYOLIM_API void byolim_dataset_free(byolim_dataset* ds);
BYOLIM_API size_t byolim_dataset_size(const byolim_dataset* ds);
BYOLIM_API size_t byolim_dataset_num_classes(const byolim_dataset* ds);
/* Writes height/width of item i and copies its pixels into buf when
 * cap >= 3*H*W floats (buf may be NULL to query the shape). */
BYOLIM_API byolim_status byolim_dataset_image(const byolim_dataset* ds, size_t i, float* buf, size_t cap,
                                              size_t* height, size_t* width, int* label);

/* Trained classifiers. */
BYOLIM_API byolim_status byolim_model_load(const char* checkpoint_path, byolim_model** out);
BYOLIM_API void byolim_model_free(byolim_model* model);
BYOLIM_API size_t byolim_model_num_classes(const byolim_model* model);
BYOLIM_API size_t byolim_model_parameter_count(const byolim_model* model);
/* images: n x 3 x H x W floats. probs receives n x K floats, labels n ints;
 * either may be NULL. */
BYOLIM_API byolim_status byolim_model_predict(byolim_model* model, const float* images, size_t n, size_t height,
                                              size_t width, float* probs, int* labels);

#ifdef __cplusplus
}
#endif

#endif /* BYOLIM_BYOLIM_H */
