/* Exercises the C API from plain C. argv[1] is a scratch directory. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "byolim/byolim.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static int lines_seen = 0;
static void count_lines(const char* line, void* user) {
  (void)line;
  ++*(int*)user;
}

static byolim_config* small_config(const char* out) {
  byolim_config* cfg = NULL;
  EXPECT(byolim_config_new(&cfg) == BYOLIM_OK);
  const char* kv[][2] = {{"seed", "5"},
                         {"data.classes", "3"},
                         {"data.per_class", "8"},
                         {"data.image_size", "16"},
                         {"classifier.num_classes", "3"},
                         {"classifier.hidden_dims", "8"},
                         {"encoder.input_size", "16"},
                         {"encoder.channels", "4,4,8,8"},
                         {"train.max_epochs", "2"},
                         {"train.batch_size", "8"},
                         {"eval.batch_size", "8"},
                         {"out", out}};
  for (size_t i = 0; i < sizeof kv / sizeof kv[0]; ++i) EXPECT(byolim_config_set(cfg, kv[i][0], kv[i][1]) == BYOLIM_OK);
  return cfg;
}

int main(int argc, char** argv) {
  const char* work = argc > 1 ? argv[1] : "capi_work";
  char path[1024];

  EXPECT(strcmp(byolim_version(), "") != 0);

  /* Config get/set and buffer sizing. */
  byolim_config* cfg = NULL;
  EXPECT(byolim_config_new(&cfg) == BYOLIM_OK);
  size_t needed = 0;
  EXPECT(byolim_config_get(cfg, "byol.tau", NULL, 0, &needed) == BYOLIM_OK);
  EXPECT(needed == strlen("0.99") + 1);
  char small[2];
  EXPECT(byolim_config_get(cfg, "byol.tau", small, sizeof small, &needed) == BYOLIM_ERR_OTHER);
  EXPECT(strcmp(byolim_last_error_kind(), "BufferTooSmall") == 0);
  char value[64];
  EXPECT(byolim_config_set(cfg, "byol.tau", "0.999") == BYOLIM_OK);
  EXPECT(byolim_config_get(cfg, "byol.tau", value, sizeof value, NULL) == BYOLIM_OK);
  EXPECT(strcmp(value, "0.999") == 0);
  EXPECT(byolim_config_set(cfg, "no.such.key", "1") == BYOLIM_ERR_CONFIG);
  EXPECT(strcmp(byolim_last_error_kind(), "ConfigInvalid") == 0);
  EXPECT(strlen(byolim_last_error()) > 0);
  EXPECT(byolim_config_load(cfg, "/nonexistent/config.cfg") == BYOLIM_ERR_CONFIG);
  EXPECT(byolim_config_dump(cfg, NULL, 0, &needed) == BYOLIM_OK);
  char* dump = malloc(needed);
  EXPECT(byolim_config_dump(cfg, dump, needed, NULL) == BYOLIM_OK);
  EXPECT(strstr(dump, "byol.tau = 0.999") != NULL);
  free(dump);
  EXPECT(byolim_config_set(cfg, "classifier.num_classes", "4") == BYOLIM_OK);
  EXPECT(byolim_config_validate(cfg) == BYOLIM_ERR_CONFIG);
  byolim_config_free(cfg);

  /* Synthetic dataset access. */
  byolim_dataset* ds = NULL;
  EXPECT(byolim_dataset_synth(3, 4, 16, 1, &ds) == BYOLIM_OK);
  EXPECT(byolim_dataset_size(ds) == 12);
  EXPECT(byolim_dataset_num_classes(ds) == 3);
  size_t h = 0, w = 0;
  int label = -1;
  EXPECT(byolim_dataset_image(ds, 5, NULL, 0, &h, &w, &label) == BYOLIM_OK);
  EXPECT(h == 16 && w == 16 && label == 1);
  float* pixels = malloc(3 * h * w * sizeof(float));
  EXPECT(byolim_dataset_image(ds, 5, pixels, 3 * h * w, NULL, NULL, NULL) == BYOLIM_OK);
  EXPECT(byolim_dataset_image(ds, 5, pixels, 3, NULL, NULL, NULL) == BYOLIM_ERR_OTHER);
  EXPECT(byolim_dataset_image(ds, 99, NULL, 0, NULL, NULL, NULL) == BYOLIM_ERR_OTHER);
  EXPECT(byolim_dataset_synth(1, 4, 16, 1, &ds) == BYOLIM_ERR_CONFIG);

  /* Train, then load the checkpoint and predict. */
  snprintf(path, sizeof path, "%s/fine", work);
  cfg = small_config(path);
  byolim_set_log_callback(count_lines, &lines_seen);
  EXPECT(byolim_cmd_finetune(cfg) == BYOLIM_OK);
  byolim_set_log_callback(NULL, NULL);
  EXPECT(lines_seen > 0);
  EXPECT(byolim_cmd_evaluate(cfg) == BYOLIM_OK);

  snprintf(path, sizeof path, "%s/fine/model.ckpt", work);
  byolim_model* model = NULL;
  EXPECT(byolim_model_load(path, &model) == BYOLIM_OK);
  EXPECT(byolim_model_num_classes(model) == 3);
  EXPECT(byolim_model_parameter_count(model) > 0);
  float probs[3];
  int pred = -1;
  EXPECT(byolim_model_predict(model, pixels, 1, 16, 16, probs, &pred) == BYOLIM_OK);
  EXPECT(pred >= 0 && pred < 3);
  EXPECT(probs[0] + probs[1] + probs[2] > 0.999f && probs[0] + probs[1] + probs[2] < 1.001f);
  byolim_model_free(model);

  EXPECT(byolim_model_load("/nonexistent/model.ckpt", &model) != BYOLIM_OK);
  snprintf(path, sizeof path, "%s/fine/history.csv", work);
  EXPECT(byolim_model_load(path, &model) == BYOLIM_ERR_CHECKPOINT);
  EXPECT(strcmp(byolim_last_error_kind(), "CheckpointCorrupt") == 0);

  EXPECT(byolim_config_set(cfg, "data", "/nonexistent/dataset") == BYOLIM_OK);
  EXPECT(byolim_cmd_finetune(cfg) == BYOLIM_ERR_DATA);
  EXPECT(byolim_cmd_pretrain(NULL) == BYOLIM_ERR_OTHER);

  byolim_config_free(cfg);
  byolim_dataset_free(ds);
  free(pixels);
  if (failures) fprintf(stderr, "%d failure(s)\n", failures);
  return failures ? 1 : 0;
}
