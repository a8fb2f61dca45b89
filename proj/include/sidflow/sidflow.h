/* Copyright 2026 The sidflow Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SIDFLOW_SIDFLOW_H_
#define SIDFLOW_SIDFLOW_H_

/* C interface to the sidflow library. Objects are opaque handles created by
 * *_load / *_create style calls and released with the matching *_free. Every
 * fallible call returns a sidflow_status; on failure sidflow_last_error()
 * describes the problem for the calling thread. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * sidflow_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SIDFLOW_API __declspec(dllexport)
#else
#define SIDFLOW_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sidflow_status {
  SIDFLOW_OK = 0,
  SIDFLOW_ERR_INVALID_ARGUMENT = 1,
  SIDFLOW_ERR_DATA = 2,
  SIDFLOW_ERR_IO = 3,
  SIDFLOW_ERR_NUMERIC = 4,
  SIDFLOW_ERR_INTERNAL = 5
} sidflow_status;

typedef enum sidflow_split {
  SIDFLOW_SPLIT_TRAIN = 0,
  SIDFLOW_SPLIT_VALIDATION = 1,
  SIDFLOW_SPLIT_TEST = 2
} sidflow_split;

typedef enum sidflow_pooling {
  SIDFLOW_POOL_CROSS_ATTENTION = 0,
  SIDFLOW_POOL_AVERAGE = 1,
  SIDFLOW_POOL_SELF_ATTENTION = 2
} sidflow_pooling;

typedef enum sidflow_features {
  SIDFLOW_FEATURES_FULL = 0,
  SIDFLOW_FEATURES_ID_ONLY = 1
} sidflow_features;

typedef struct sidflow_embeddings sidflow_embeddings;
typedef struct sidflow_codebook sidflow_codebook;
typedef struct sidflow_sidmap sidflow_sidmap;
typedef struct sidflow_dataset sidflow_dataset;
typedef struct sidflow_model sidflow_model;

SIDFLOW_API const char* sidflow_version(void);
SIDFLOW_API const char* sidflow_last_error(void);
SIDFLOW_API const char* sidflow_status_name(sidflow_status status);
SIDFLOW_API void sidflow_string_free(char* s);

/* Seed of the named sub-stream ("tokenizer", "hasher", "init", "data")
 * of a root seed. */
SIDFLOW_API uint64_t sidflow_derive_seed(uint64_t root, const char* stream);

/* ---- synthetic data ---------------------------------------------------- */

typedef struct sidflow_synth_params {
  uint32_t n_users;
  uint32_t n_items;
  uint32_t d_enc;
  uint32_t history_len;
  uint64_t seed;
  uint32_t n_clusters;
  uint32_t n_subclusters;
  uint32_t ref_levels;
  uint32_t ref_codebook_size;
} sidflow_synth_params;

SIDFLOW_API void sidflow_synth_params_default(sidflow_synth_params* p);

/* Writes an interactions CSV and an EMBF embedding file. */
SIDFLOW_API sidflow_status sidflow_synth_write(const sidflow_synth_params* p,
                                               const char* interactions_path,
                                               const char* embeddings_path);

/* ---- embeddings and tokenizer ------------------------------------------ */

SIDFLOW_API sidflow_status sidflow_embeddings_load(const char* path, sidflow_embeddings** out);
SIDFLOW_API void sidflow_embeddings_free(sidflow_embeddings* e);
SIDFLOW_API size_t sidflow_embeddings_n_items(const sidflow_embeddings* e);
SIDFLOW_API size_t sidflow_embeddings_dim(const sidflow_embeddings* e);

typedef struct sidflow_tokenizer_params {
  uint32_t n_levels;
  uint32_t codebook_size;
  uint32_t max_iters;
  uint32_t batch_size; /* 0 = full-batch Lloyd */
  uint64_t seed;       /* used as given; callers derive sub-streams */
} sidflow_tokenizer_params;

SIDFLOW_API void sidflow_tokenizer_params_default(sidflow_tokenizer_params* p);

/* Fits the residual codebooks and tokenizes every item. */
SIDFLOW_API sidflow_status sidflow_tokenize(const sidflow_embeddings* e,
                                            const sidflow_tokenizer_params* p,
                                            sidflow_codebook** out_codebook,
                                            sidflow_sidmap** out_sidmap);

/* Sum over items of the squared residual left after `levels` levels. */
SIDFLOW_API sidflow_status sidflow_quantization_error(const sidflow_embeddings* e,
                                                      const sidflow_codebook* c, size_t levels,
                                                      double* out);

SIDFLOW_API sidflow_status sidflow_codebook_save(const sidflow_codebook* c, const char* path);
SIDFLOW_API sidflow_status sidflow_codebook_load(const char* path, sidflow_codebook** out);
SIDFLOW_API void sidflow_codebook_free(sidflow_codebook* c);

SIDFLOW_API sidflow_status sidflow_sidmap_save(const sidflow_sidmap* m, const char* path);
SIDFLOW_API sidflow_status sidflow_sidmap_load(const char* path, sidflow_sidmap** out);
SIDFLOW_API void sidflow_sidmap_free(sidflow_sidmap* m);
SIDFLOW_API size_t sidflow_sidmap_n_items(const sidflow_sidmap* m);
SIDFLOW_API size_t sidflow_sidmap_n_levels(const sidflow_sidmap* m);
/* Copies the codes of `item` into codes[0..n_levels). */
SIDFLOW_API sidflow_status sidflow_sidmap_get(const sidflow_sidmap* m, uint32_t item,
                                              uint16_t* codes, size_t capacity);

/* ---- interactions ------------------------------------------------------ */

/* Loads an interactions CSV, builds per-user histories and a temporal split
 * with the given ratios (which must sum to 1). */
SIDFLOW_API sidflow_status sidflow_dataset_load(const char* path, double train_ratio,
                                                double validation_ratio, double test_ratio,
                                                sidflow_dataset** out);
SIDFLOW_API void sidflow_dataset_free(sidflow_dataset* d);
SIDFLOW_API size_t sidflow_dataset_size(const sidflow_dataset* d, sidflow_split split);
SIDFLOW_API uint32_t sidflow_dataset_max_user(const sidflow_dataset* d);
SIDFLOW_API uint32_t sidflow_dataset_max_item(const sidflow_dataset* d);

/* ---- retrieval, model, training ---------------------------------------- */

typedef struct sidflow_retrieval_params {
  uint32_t k;
  uint32_t w;
  uint32_t n;
  uint32_t hash_bits;
  double tau;
  int disable_sid_retrieval;
  int disable_id_fill;
  int match_count_scoring; /* level-wise matches instead of strict prefix */
} sidflow_retrieval_params;

SIDFLOW_API void sidflow_retrieval_params_default(sidflow_retrieval_params* p);

#define SIDFLOW_MAX_HIDDEN 8

typedef struct sidflow_model_params {
  uint32_t d_model;
  uint32_t n_hidden;
  uint32_t hidden[SIDFLOW_MAX_HIDDEN];
  sidflow_pooling pooling;
  sidflow_features features;
} sidflow_model_params;

SIDFLOW_API void sidflow_model_params_default(sidflow_model_params* p);

typedef struct sidflow_train_params {
  double learning_rate;
  uint32_t batch_size;
  uint32_t epochs;
  double beta1;
  double beta2;
  double epsilon;
  uint64_t seed;
  uint32_t resig_interval; /* 0 = once per epoch */
} sidflow_train_params;

SIDFLOW_API void sidflow_train_params_default(sidflow_train_params* p);

typedef struct sidflow_train_progress {
  uint32_t epoch;
  uint64_t step;
  uint64_t total_steps;
  uint64_t examples;
  double loss;
} sidflow_train_progress;

typedef void (*sidflow_progress_fn)(const sidflow_train_progress* progress, void* user_data);

/* Trains on the dataset's train split. The SID map's levels and codebook
 * size (largest code + 1) fix the SID embedding tables. `progress` may be
 * NULL. */
SIDFLOW_API sidflow_status sidflow_train(const sidflow_dataset* d, const sidflow_sidmap* m,
                                         const sidflow_model_params* model,
                                         const sidflow_retrieval_params* retrieval,
                                         const sidflow_train_params* train,
                                         sidflow_progress_fn progress, void* user_data,
                                         sidflow_model** out);

SIDFLOW_API sidflow_status sidflow_model_save(const sidflow_model* model, const char* path);
SIDFLOW_API sidflow_status sidflow_model_load(const char* path, sidflow_model** out);
SIDFLOW_API void sidflow_model_free(sidflow_model* model);
/* Model and retrieval configuration as a JSON object. */
SIDFLOW_API sidflow_status sidflow_model_config_json(const sidflow_model* model, char** out_json);

/* ---- evaluation, retrieval explanation, latency ------------------------ */

typedef struct sidflow_metrics {
  double auc;
  double logloss;
  uint64_t n_samples;
} sidflow_metrics;

typedef struct sidflow_eval_report {
  sidflow_metrics overall;
  sidflow_metrics head;
  sidflow_metrics tail;
  int has_head; /* 0 when the group is empty or single-class */
  int has_tail;
  uint64_t n_head;
  uint64_t n_tail;
} sidflow_eval_report;

/* Head/tail groups use train-split popularity when `grouping` is non-zero. */
SIDFLOW_API sidflow_status sidflow_evaluate(const sidflow_model* model, const sidflow_dataset* d,
                                            const sidflow_sidmap* m, sidflow_split split,
                                            int grouping, sidflow_eval_report* out);

/* Stage-1 routes for `item` against the user's latest behaviours (the last
 * 300 clicks) as a JSON object. `model` may be NULL, in which case no ID
 * fill happens and `retrieval` (or the defaults when NULL) is used. */
SIDFLOW_API sidflow_status sidflow_retrieve_json(const sidflow_dataset* d, const sidflow_sidmap* m,
                                                 const sidflow_model* model,
                                                 const sidflow_retrieval_params* retrieval,
                                                 uint32_t user, uint32_t item, char** out_json);

typedef struct sidflow_latency {
  double median_us;
  double p99_us;
  double mean_us;
  uint64_t samples;
} sidflow_latency;

typedef struct sidflow_bench_report {
  sidflow_latency retrieval;
  sidflow_latency end_to_end;
} sidflow_bench_report;

/* Times up to `max_instances` instances of `split` (0 = all), `repeats`
 * times each, single-threaded. */
SIDFLOW_API sidflow_status sidflow_bench(const sidflow_model* model, const sidflow_dataset* d,
                                         const sidflow_sidmap* m, sidflow_split split,
                                         size_t max_instances, size_t repeats,
                                         sidflow_bench_report* out);

#ifdef __cplusplus
}
#endif

#endif  // SIDFLOW_SIDFLOW_H_
