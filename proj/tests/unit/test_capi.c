/* Exercises the public C interface from a C translation unit. */
#include <lhc/lhc.h>

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s (%s)\n", __FILE__, __LINE__, \
              #cond, lhc_last_error());                                \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static size_t epochs_seen = 0;
static void on_epoch(const lhc_epoch_info* info, void* user) {
  (void)user;
  if (info->epoch == epochs_seen + 1) ++epochs_seen;
}

static const char* kConfig =
    "{\"dataset\":\"planted\",\"extractor_dims\":[8],\"L\":2,\"alpha\":5,"
    "\"string_ce_order\":\"q_target\",\"batch_size\":16,\"lr\":0.01,\"base_epochs\":10,"
    "\"epochs\":2,\"val_size\":40,\"c2s_hidden\":16,\"s2c_hidden\":16,"
    "\"planted\":{\"depth\":2,\"dim\":6,\"samples_per_class\":60,"
    "\"test_samples_per_class\":20}}";

int main(void) {
  lhc_config* cfg = NULL;
  lhc_dataset* data = NULL;
  lhc_model* base = NULL;
  lhc_model* lh = NULL;
  lhc_model* loaded = NULL;
  lhc_train_summary summary;
  lhc_eval_result eval;
  char* text = NULL;
  lhc_status st;

  EXPECT(strlen(lhc_version()) > 0);
  EXPECT(strcmp(lhc_status_name(LHC_ERR_COLLISION), "") != 0);

  /* argument and format errors */
  EXPECT(lhc_config_from_json("{\"L\":", &cfg) == LHC_ERR_FORMAT);
  EXPECT(strlen(lhc_last_error()) > 0);
  EXPECT(lhc_config_from_json("{\"nope\":1}", &cfg) == LHC_ERR_INVALID_ARGUMENT);
  EXPECT(lhc_config_default(NULL) == LHC_ERR_INVALID_ARGUMENT);
  EXPECT(lhc_config_load("/nonexistent/config.json", &cfg) == LHC_ERR_IO);
  EXPECT(lhc_model_load("/nonexistent/model.lhc1", &loaded) == LHC_ERR_IO);

  EXPECT(lhc_config_from_json(kConfig, &cfg) == LHC_OK);
  EXPECT(lhc_config_set(cfg, "L", "0") == LHC_ERR_INVALID_ARGUMENT);
  EXPECT(lhc_config_set(cfg, "L", "[") == LHC_ERR_FORMAT);
  EXPECT(lhc_config_set(cfg, "seed", "4") == LHC_OK);
  EXPECT(lhc_config_to_json(cfg, &text) == LHC_OK);
  EXPECT(text && strstr(text, "\"seed\": 4") != NULL);
  lhc_string_free(text);
  text = NULL;

  EXPECT(lhc_dataset_load(cfg, NULL, &data) == LHC_OK);
  EXPECT(lhc_dataset_rows(data, LHC_SPLIT_TRAIN) == 240);
  EXPECT(lhc_dataset_rows(data, LHC_SPLIT_TEST) == 80);
  EXPECT(lhc_dataset_dim(data) == 6);
  EXPECT(lhc_dataset_classes(data) == 4);
  EXPECT(lhc_dataset_planted_tree(data, &text) == LHC_OK);
  {
    int equal = 0;
    double fraction = 0.0;
    EXPECT(lhc_tree_compare(text, text, &equal, &fraction) == LHC_OK);
    EXPECT(equal == 1 && fraction == 1.0);
    EXPECT(lhc_tree_compare("{}", text, &equal, &fraction) == LHC_ERR_FORMAT);
  }
  lhc_string_free(text);
  text = NULL;

  EXPECT(lhc_train_base(cfg, data, on_epoch, NULL, &base, &summary) == LHC_OK);
  EXPECT(epochs_seen == summary.epochs_run);
  EXPECT(summary.test_accuracy > 0.9);
  EXPECT(lhc_model_get_kind(base) == LHC_MODEL_BASE);
  EXPECT(lhc_evaluate(base, data, LHC_SPLIT_TEST, &eval) == LHC_OK);
  EXPECT(eval.num_bits == 0 && fabs(eval.accuracy - summary.test_accuracy) < 1e-12);
  EXPECT(lhc_export_tree(base, LHC_TREE_DOT, &text) == LHC_ERR_INVALID_ARGUMENT);

  st = lhc_train_lh(cfg, base, data, NULL, NULL, &lh, &summary);
  EXPECT(st == LHC_OK || st == LHC_ERR_COLLISION);
  EXPECT(lh != NULL);
  if (st == LHC_OK) {
    EXPECT(summary.collisions == 0);
    EXPECT(lhc_evaluate(lh, data, LHC_SPLIT_TEST, &eval) == LHC_OK);
    EXPECT(eval.num_bits == 2);
    EXPECT(fabs(eval.accuracy - summary.test_accuracy) < 1e-12);
    EXPECT(lhc_export_tree(lh, LHC_TREE_JSON, &text) == LHC_OK);
    lhc_string_free(text);
    text = NULL;
    EXPECT(lhc_model_save(lh, "lhc_capi_test.lhc1") == LHC_OK);
    EXPECT(lhc_model_load("lhc_capi_test.lhc1", &loaded) == LHC_OK);
    if (loaded) {
      lhc_eval_result again;
      EXPECT(lhc_model_get_kind(loaded) == LHC_MODEL_LH);
      EXPECT(lhc_evaluate(loaded, data, LHC_SPLIT_TEST, &again) == LHC_OK);
      EXPECT(again.accuracy == eval.accuracy);
    }
    remove("lhc_capi_test.lhc1");
  } else {
    EXPECT(summary.collisions > 0);
  }
  EXPECT(lhc_model_metrics_csv(lh, &text) == LHC_OK);
  EXPECT(text && strncmp(text, "epoch,", 6) == 0);
  lhc_string_free(text);
  text = NULL;

  {
    size_t too_short[] = {1};
    EXPECT(lhc_sweep_length(cfg, base, data, too_short, 1, &text) == LHC_ERR_INVALID_ARGUMENT);
  }
  {
    lhc_head_counts counts;
    size_t hidden[] = {500};
    EXPECT(lhc_compare_heads(3136, hidden, 1, 10, 10, 1, &counts) == LHC_OK);
    EXPECT(counts.fc_params == 1573510 && counts.lh_params == 32232);
  }
  EXPECT(lhc_gradcheck(1, &text) == LHC_OK);
  EXPECT(text && strstr(text, "\"worst\"") != NULL);
  lhc_string_free(text);

  lhc_model_free(loaded);
  lhc_model_free(lh);
  lhc_model_free(base);
  lhc_dataset_free(data);
  lhc_config_free(cfg);
  lhc_model_free(NULL);

  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  puts("all C API checks passed");
  return 0;
}
