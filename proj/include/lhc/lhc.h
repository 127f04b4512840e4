/* C interface to the latent-hierarchy classifier library. */
#ifndef LHC_LHC_H
#define LHC_LHC_H

#include <stddef.h>
#include <stdint.h>

#if defined(LHC_BUILDING_LIBRARY)
#define LHC_API __attribute__((visibility("default")))
#else
#define LHC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lhc_status {
  LHC_OK = 0,
  LHC_ERR_INVALID_ARGUMENT = 1, /* bad config, flag or parameter value */
  LHC_ERR_IO = 2,
  LHC_ERR_FORMAT = 3,    /* malformed IDX / LHF1 / LHC1 / JSON input */
  LHC_ERR_DIMENSION = 4, /* shape mismatch */
  LHC_ERR_COLLISION = 5, /* class-to-string map is not one to one */
  LHC_ERR_DIVERGED = 6,  /* non-finite loss */
  LHC_ERR_INTERNAL = 7
} lhc_status;

#define LHC_MAX_BITS 64

typedef struct lhc_config lhc_config;
typedef struct lhc_dataset lhc_dataset;
typedef struct lhc_model lhc_model;

/* Message for the last failing call on this thread; never NULL. */
LHC_API const char* lhc_last_error(void);
LHC_API const char* lhc_version(void);
LHC_API const char* lhc_status_name(lhc_status status);
/* Frees strings returned through char** out-parameters. */
LHC_API void lhc_string_free(char* s);

/* ---- configuration ---- */
LHC_API lhc_status lhc_config_default(lhc_config** out);
LHC_API lhc_status lhc_config_from_json(const char* json_text, lhc_config** out);
LHC_API lhc_status lhc_config_load(const char* path, lhc_config** out);
/* Overrides one key with a JSON value, e.g. ("L", "5") or ("dataset", "\"planted\""). */
LHC_API lhc_status lhc_config_set(lhc_config* config, const char* key, const char* json_value);
LHC_API lhc_status lhc_config_to_json(const lhc_config* config, char** out_json);
LHC_API void lhc_config_free(lhc_config* config);

/* ---- datasets ---- */
typedef enum lhc_split { LHC_SPLIT_TRAIN = 0, LHC_SPLIT_TEST = 1 } lhc_split;

/* Train/test pair resolved from the config's dataset kind. data_path is the
 * MNIST directory or a directory with train.lhf1/test.lhf1; may be NULL for
 * planted data. */
LHC_API lhc_status lhc_dataset_load(const lhc_config* config, const char* data_path, lhc_dataset** out);
/* Writes train.lhf1, test.lhf1 and (for planted data) tree.json into dir. */
LHC_API lhc_status lhc_dataset_save(const lhc_dataset* data, const char* dir);
LHC_API size_t lhc_dataset_rows(const lhc_dataset* data, lhc_split split);
LHC_API size_t lhc_dataset_dim(const lhc_dataset* data);
LHC_API size_t lhc_dataset_classes(const lhc_dataset* data);
/* JSON planted tree, or LHC_ERR_INVALID_ARGUMENT when the data has none. */
LHC_API lhc_status lhc_dataset_planted_tree(const lhc_dataset* data, char** out_json);
LHC_API void lhc_dataset_free(lhc_dataset* data);

/* ---- training ---- */
typedef struct lhc_epoch_info {
  size_t epoch; /* 1-based */
  double loss_total;
  double loss_class;
  double loss_string;
  double loss_bias;
  double loss_l2;
  double train_acc;
  double val_acc;
} lhc_epoch_info;

typedef void (*lhc_epoch_callback)(const lhc_epoch_info* info, void* user);

typedef struct lhc_train_summary {
  double train_accuracy;
  double test_accuracy;
  double wall_seconds;
  size_t epochs_run;
  size_t best_epoch;
  double mean_bit_bias; /* LH models only */
  size_t collisions;    /* colliding class pairs; LH models only */
} lhc_train_summary;

LHC_API lhc_status lhc_train_base(const lhc_config* config, const lhc_dataset* data,
                                  lhc_epoch_callback cb, void* user, lhc_model** out,
                                  lhc_train_summary* summary);
/* On collision the model is still returned (no lookup table) and the call
 * reports LHC_ERR_COLLISION with the colliding pairs in lhc_last_error(). */
LHC_API lhc_status lhc_train_lh(const lhc_config* config, const lhc_model* base,
                                const lhc_dataset* data, lhc_epoch_callback cb, void* user,
                                lhc_model** out, lhc_train_summary* summary);

/* ---- models ---- */
typedef enum lhc_model_kind { LHC_MODEL_BASE = 0, LHC_MODEL_LH = 1 } lhc_model_kind;

LHC_API lhc_status lhc_model_save(const lhc_model* model, const char* path);
LHC_API lhc_status lhc_model_load(const char* path, lhc_model** out);
LHC_API lhc_model_kind lhc_model_get_kind(const lhc_model* model);
LHC_API lhc_status lhc_model_metrics_csv(const lhc_model* model, char** out_csv);
LHC_API lhc_status lhc_model_config_json(const lhc_model* model, char** out_json);
LHC_API lhc_status lhc_model_lookup_json(const lhc_model* model, char** out_json);
LHC_API void lhc_model_free(lhc_model* model);

typedef struct lhc_eval_result {
  double accuracy;
  size_t samples;
  size_t no_match;
  size_t num_bits;
  double bit_accuracy[LHC_MAX_BITS];
} lhc_eval_result;

/* Base models report plain accuracy with num_bits = 0. */
LHC_API lhc_status lhc_evaluate(const lhc_model* model, const lhc_dataset* data, lhc_split split,
                                lhc_eval_result* out);

typedef enum lhc_tree_format { LHC_TREE_DOT = 0, LHC_TREE_JSON = 1 } lhc_tree_format;
LHC_API lhc_status lhc_export_tree(const lhc_model* model, lhc_tree_format format, char** out_text);
/* Compares two JSON trees; fraction is shared / reference clusters. */
LHC_API lhc_status lhc_tree_compare(const char* tree_json, const char* reference_json, int* equal,
                                    double* shared_fraction);

/* ---- experiments ---- */
typedef struct lhc_ablation_result {
  double learned_accuracy;
  double random_accuracy;
  int learned_one_to_one;
} lhc_ablation_result;

LHC_API lhc_status lhc_ablate(const lhc_config* config, const lhc_model* base, const lhc_dataset* data,
                              uint64_t seed, lhc_ablation_result* out, char** out_random_lookup_json);
/* CSV with columns L,accuracy,one_to_one. */
LHC_API lhc_status lhc_sweep_length(const lhc_config* config, const lhc_model* base,
                                    const lhc_dataset* data, const size_t* lengths, size_t count,
                                    char** out_csv);
/* JSON {"terms": {name: max_rel_error}, "worst": x}. */
LHC_API lhc_status lhc_gradcheck(uint64_t seed, char** out_json);

typedef struct lhc_head_counts {
  size_t fc_params;
  size_t lh_params;
  double reduction;
} lhc_head_counts;
LHC_API lhc_status lhc_compare_heads(size_t feature_dim, const size_t* fc_hidden, size_t fc_hidden_count,
                                     size_t num_classes, size_t lstm_hidden, size_t lstm_layers,
                                     lhc_head_counts* out);

#ifdef __cplusplus
}
#endif

#endif /* LHC_LHC_H */
