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

#include "sidflow/sidflow.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <new>
#include <optional>
#include <string>

#include <json.hpp>

#include "sidflow/behavior_store.hpp"
#include "sidflow/evaluation.hpp"
#include "sidflow/trainer.hpp"

#ifndef SIDFLOW_VERSION
#define SIDFLOW_VERSION "0.0.0-unknown"
#endif

struct sidflow_embeddings {
  sidflow::EmbeddingMatrix value;
};
struct sidflow_codebook {
  sidflow::Codebook value;
};
struct sidflow_sidmap {
  sidflow::SidMap value;
};
struct sidflow_dataset {
  sidflow::BehaviorStore store;
  sidflow::DatasetSplit split;
};
struct sidflow_model {
  sidflow::Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;

sidflow_status to_status(sidflow::ErrorKind kind) {
  switch (kind) {
    case sidflow::ErrorKind::kInvalidArgument: return SIDFLOW_ERR_INVALID_ARGUMENT;
    case sidflow::ErrorKind::kData: return SIDFLOW_ERR_DATA;
    case sidflow::ErrorKind::kIo: return SIDFLOW_ERR_IO;
    case sidflow::ErrorKind::kNumeric: return SIDFLOW_ERR_NUMERIC;
  }
  return SIDFLOW_ERR_INTERNAL;
}

sidflow_status set_error(sidflow_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename Fn>
sidflow_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SIDFLOW_OK;
  } catch (const sidflow::Error& e) {
    return set_error(to_status(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(SIDFLOW_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(SIDFLOW_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(SIDFLOW_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  SIDFLOW_CHECK(ok, sidflow::ErrorKind::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::copy(s.begin(), s.end(), out);
  out[s.size()] = '\0';
  return out;
}

const std::vector<sidflow::Instance>& split_of(const sidflow_dataset* d, sidflow_split split) {
  switch (split) {
    case SIDFLOW_SPLIT_TRAIN: return d->split.train;
    case SIDFLOW_SPLIT_VALIDATION: return d->split.validation;
    case SIDFLOW_SPLIT_TEST: return d->split.test;
  }
  sidflow::fail(sidflow::ErrorKind::kInvalidArgument, "unknown split");
}

sidflow::RetrievalConfig to_config(const sidflow_retrieval_params& p) {
  sidflow::RetrievalConfig c;
  c.k = p.k;
  c.w = p.w;
  c.n = p.n;
  c.hash_bits = p.hash_bits;
  c.tau = p.tau;
  c.disable_sid_retrieval = p.disable_sid_retrieval != 0;
  c.disable_id_fill = p.disable_id_fill != 0;
  c.score_mode = p.match_count_scoring ? sidflow::ScoreMode::kMatchCount
                                       : sidflow::ScoreMode::kStrictPrefix;
  return c;
}

sidflow_metrics to_c(const sidflow::Metrics& m) {
  return sidflow_metrics{m.auc, m.logloss, m.n_samples};
}

sidflow_latency to_c(const sidflow::LatencyStats& s) {
  return sidflow_latency{s.median_us, s.p99_us, s.mean_us, s.samples};
}

nlohmann::ordered_json sid_json(const sidflow::SemanticId& sid) {
  auto out = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < sid.size(); ++l) out.push_back(sid[l]);
  return out;
}

}  // namespace

extern "C" {

const char* sidflow_version(void) { return SIDFLOW_VERSION; }

const char* sidflow_last_error(void) { return g_last_error.c_str(); }

const char* sidflow_status_name(sidflow_status status) {
  switch (status) {
    case SIDFLOW_OK: return "ok";
    case SIDFLOW_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SIDFLOW_ERR_DATA: return "data error";
    case SIDFLOW_ERR_IO: return "i/o error";
    case SIDFLOW_ERR_NUMERIC: return "numeric error";
    case SIDFLOW_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void sidflow_string_free(char* s) { delete[] s; }

uint64_t sidflow_derive_seed(uint64_t root, const char* stream) {
  return sidflow::derive_seed(root, stream ? stream : "");
}

// ---- synthetic data --------------------------------------------------------

void sidflow_synth_params_default(sidflow_synth_params* p) {
  if (p == nullptr) return;
  const sidflow::SynthConfig c;
  *p = sidflow_synth_params{static_cast<uint32_t>(c.n_users),
                            static_cast<uint32_t>(c.n_items),
                            static_cast<uint32_t>(c.d_enc),
                            static_cast<uint32_t>(c.history_len),
                            c.seed,
                            static_cast<uint32_t>(c.n_clusters),
                            static_cast<uint32_t>(c.n_subclusters),
                            static_cast<uint32_t>(c.ref_levels),
                            static_cast<uint32_t>(c.ref_codebook_size)};
}

sidflow_status sidflow_synth_write(const sidflow_synth_params* p, const char* interactions_path,
                                   const char* embeddings_path) {
  return guarded([&] {
    require(p && interactions_path && embeddings_path, "synth: null argument");
    sidflow::SynthConfig c;
    c.n_users = p->n_users;
    c.n_items = p->n_items;
    c.d_enc = p->d_enc;
    c.history_len = p->history_len;
    c.seed = p->seed;
    c.n_clusters = p->n_clusters;
    c.n_subclusters = p->n_subclusters;
    c.ref_levels = p->ref_levels;
    c.ref_codebook_size = p->ref_codebook_size;
    const sidflow::SyntheticData data = sidflow::generate_synthetic(c);
    sidflow::save_interactions(interactions_path, data.interactions);
    sidflow::save_embeddings(embeddings_path, data.embeddings);
  });
}

// ---- embeddings and tokenizer ---------------------------------------------

sidflow_status sidflow_embeddings_load(const char* path, sidflow_embeddings** out) {
  return guarded([&] {
    require(path && out, "embeddings_load: null argument");
    *out = new sidflow_embeddings{sidflow::load_embeddings(path)};
  });
}

void sidflow_embeddings_free(sidflow_embeddings* e) { delete e; }

size_t sidflow_embeddings_n_items(const sidflow_embeddings* e) {
  return e ? e->value.n_items() : 0;
}

size_t sidflow_embeddings_dim(const sidflow_embeddings* e) { return e ? e->value.dim() : 0; }

void sidflow_tokenizer_params_default(sidflow_tokenizer_params* p) {
  if (p == nullptr) return;
  const sidflow::TokenizerOptions o;
  *p = sidflow_tokenizer_params{static_cast<uint32_t>(o.n_levels),
                                static_cast<uint32_t>(o.codebook_size),
                                static_cast<uint32_t>(o.max_iters),
                                static_cast<uint32_t>(o.batch_size), o.seed};
}

sidflow_status sidflow_tokenize(const sidflow_embeddings* e, const sidflow_tokenizer_params* p,
                                sidflow_codebook** out_codebook, sidflow_sidmap** out_sidmap) {
  return guarded([&] {
    require(e && p && out_codebook && out_sidmap, "tokenize: null argument");
    sidflow::TokenizerOptions o;
    o.n_levels = p->n_levels;
    o.codebook_size = p->codebook_size;
    o.max_iters = p->max_iters;
    o.batch_size = p->batch_size;
    o.seed = p->seed;
    auto codebook = std::make_unique<sidflow_codebook>(
        sidflow_codebook{sidflow::fit_codebooks(e->value, o)});
    auto sidmap = std::make_unique<sidflow_sidmap>(
        sidflow_sidmap{sidflow::tokenize_catalog(e->value, codebook->value)});
    *out_codebook = codebook.release();
    *out_sidmap = sidmap.release();
  });
}

sidflow_status sidflow_quantization_error(const sidflow_embeddings* e, const sidflow_codebook* c,
                                          size_t levels, double* out) {
  return guarded([&] {
    require(e && c && out, "quantization_error: null argument");
    *out = sidflow::quantization_error(e->value, c->value, levels);
  });
}

sidflow_status sidflow_codebook_save(const sidflow_codebook* c, const char* path) {
  return guarded([&] {
    require(c && path, "codebook_save: null argument");
    sidflow::save_codebook(path, c->value);
  });
}

sidflow_status sidflow_codebook_load(const char* path, sidflow_codebook** out) {
  return guarded([&] {
    require(path && out, "codebook_load: null argument");
    *out = new sidflow_codebook{sidflow::load_codebook(path)};
  });
}

void sidflow_codebook_free(sidflow_codebook* c) { delete c; }

sidflow_status sidflow_sidmap_save(const sidflow_sidmap* m, const char* path) {
  return guarded([&] {
    require(m && path, "sidmap_save: null argument");
    sidflow::save_sid_map(path, m->value);
  });
}

sidflow_status sidflow_sidmap_load(const char* path, sidflow_sidmap** out) {
  return guarded([&] {
    require(path && out, "sidmap_load: null argument");
    *out = new sidflow_sidmap{sidflow::load_sid_map(path)};
  });
}

void sidflow_sidmap_free(sidflow_sidmap* m) { delete m; }

size_t sidflow_sidmap_n_items(const sidflow_sidmap* m) { return m ? m->value.n_items() : 0; }

size_t sidflow_sidmap_n_levels(const sidflow_sidmap* m) { return m ? m->value.n_levels() : 0; }

sidflow_status sidflow_sidmap_get(const sidflow_sidmap* m, uint32_t item, uint16_t* codes,
                                  size_t capacity) {
  return guarded([&] {
    require(m && codes, "sidmap_get: null argument");
    const sidflow::SemanticId& sid = m->value.at(item);
    require(capacity >= sid.size(), "sidmap_get: output buffer too small");
    for (std::size_t l = 0; l < sid.size(); ++l) codes[l] = sid[l];
  });
}

// ---- interactions ----------------------------------------------------------

sidflow_status sidflow_dataset_load(const char* path, double train_ratio, double validation_ratio,
                                    double test_ratio, sidflow_dataset** out) {
  return guarded([&] {
    require(path && out, "dataset_load: null argument");
    require(train_ratio >= 0.0 && validation_ratio >= 0.0 && test_ratio >= 0.0 &&
                std::abs(train_ratio + validation_ratio + test_ratio - 1.0) < 1e-9,
            "dataset_load: split ratios must be >= 0 and sum to 1");
    const auto interactions = sidflow::load_interactions(path);
    SIDFLOW_CHECK(!interactions.empty(), sidflow::ErrorKind::kData,
                  std::string(path) + ": no interactions");
    auto d = std::make_unique<sidflow_dataset>();
    d->store = sidflow::BehaviorStore::build(interactions);
    try {
      d->split = sidflow::temporal_split(d->store.instances(),
                                         {train_ratio, validation_ratio, test_ratio});
    } catch (const sidflow::Error& e) {
      sidflow::fail(sidflow::ErrorKind::kData, std::string(path) + ": " + e.what());
    }
    *out = d.release();
  });
}

void sidflow_dataset_free(sidflow_dataset* d) { delete d; }

size_t sidflow_dataset_size(const sidflow_dataset* d, sidflow_split split) {
  if (d == nullptr) return 0;
  try {
    return split_of(d, split).size();
  } catch (...) {
    return 0;
  }
}

uint32_t sidflow_dataset_max_user(const sidflow_dataset* d) { return d ? d->store.max_user() : 0; }

uint32_t sidflow_dataset_max_item(const sidflow_dataset* d) { return d ? d->store.max_item() : 0; }

// ---- retrieval, model, training -------------------------------------------

void sidflow_retrieval_params_default(sidflow_retrieval_params* p) {
  if (p == nullptr) return;
  const sidflow::RetrievalConfig c;
  *p = sidflow_retrieval_params{static_cast<uint32_t>(c.k), static_cast<uint32_t>(c.w),
                                static_cast<uint32_t>(c.n), static_cast<uint32_t>(c.hash_bits),
                                c.tau, 0, 0, 0};
}

void sidflow_model_params_default(sidflow_model_params* p) {
  if (p == nullptr) return;
  const sidflow::ModelConfig c;
  *p = sidflow_model_params{};
  p->d_model = static_cast<uint32_t>(c.d_model);
  p->n_hidden = static_cast<uint32_t>(c.hidden.size());
  for (std::size_t i = 0; i < c.hidden.size(); ++i) p->hidden[i] = static_cast<uint32_t>(c.hidden[i]);
  p->pooling = SIDFLOW_POOL_CROSS_ATTENTION;
  p->features = SIDFLOW_FEATURES_FULL;
}

void sidflow_train_params_default(sidflow_train_params* p) {
  if (p == nullptr) return;
  const sidflow::TrainConfig c;
  *p = sidflow_train_params{c.learning_rate, static_cast<uint32_t>(c.batch_size),
                            static_cast<uint32_t>(c.epochs), c.beta1, c.beta2, c.epsilon,
                            c.seed, static_cast<uint32_t>(c.resig_interval)};
}

sidflow_status sidflow_train(const sidflow_dataset* d, const sidflow_sidmap* m,
                             const sidflow_model_params* model,
                             const sidflow_retrieval_params* retrieval,
                             const sidflow_train_params* train, sidflow_progress_fn progress,
                             void* user_data, sidflow_model** out) {
  return guarded([&] {
    require(d && m && model && retrieval && train && out, "train: null argument");
    require(model->n_hidden <= SIDFLOW_MAX_HIDDEN, "train: too many hidden layers");
    require(model->pooling >= SIDFLOW_POOL_CROSS_ATTENTION &&
                model->pooling <= SIDFLOW_POOL_SELF_ATTENTION,
            "train: unknown pooling mode");
    require(model->features == SIDFLOW_FEATURES_FULL ||
                model->features == SIDFLOW_FEATURES_ID_ONLY,
            "train: unknown feature mode");
    const sidflow::SidMap& sids = m->value;
    SIDFLOW_CHECK(d->store.max_item() <= sids.n_items(), sidflow::ErrorKind::kData,
                  "interactions reference item " + std::to_string(d->store.max_item()) +
                      " but the sid map covers only " + std::to_string(sids.n_items()) +
                      " items");

    std::size_t max_code = 0;
    for (sidflow::ItemId item = 1; item <= sids.n_items(); ++item) {
      for (std::size_t l = 0; l < sids.n_levels(); ++l) {
        max_code = std::max<std::size_t>(max_code, sids[item][l]);
      }
    }
    const sidflow::RetrievalConfig rc = to_config(*retrieval);
    rc.validate();

    sidflow::ModelConfig mc;
    mc.n_users = d->store.max_user();
    mc.n_items = sids.n_items();
    mc.n_sid_levels = sids.n_levels();
    mc.codebook_size = max_code + 1;
    mc.d_model = model->d_model;
    mc.k_max = rc.k_max();
    mc.hidden.assign(model->hidden, model->hidden + model->n_hidden);
    mc.pooling = static_cast<sidflow::PoolingMode>(model->pooling);
    mc.features = static_cast<sidflow::FeatureMode>(model->features);

    sidflow::TrainConfig tc;
    tc.learning_rate = train->learning_rate;
    tc.batch_size = train->batch_size;
    tc.epochs = train->epochs;
    tc.beta1 = train->beta1;
    tc.beta2 = train->beta2;
    tc.epsilon = train->epsilon;
    tc.seed = train->seed;
    tc.resig_interval = train->resig_interval;
    tc.validate();

    const auto& instances = d->split.train;
    const std::uint64_t per_epoch = (instances.size() + tc.batch_size - 1) / tc.batch_size;
    std::function<void(const sidflow::TrainProgress&)> on_step;
    if (progress != nullptr) {
      on_step = [&](const sidflow::TrainProgress& p) {
        const sidflow_train_progress cp{static_cast<uint32_t>(p.epoch), p.step,
                                        per_epoch * tc.epochs, p.examples, p.loss};
        progress(&cp, user_data);
      };
    }
    sidflow::TrainResult result = sidflow::train(d->store, instances, sids, mc, rc, tc, on_step);
    *out = new sidflow_model{std::move(result.checkpoint)};
  });
}

sidflow_status sidflow_model_save(const sidflow_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "model_save: null argument");
    sidflow::save_checkpoint(path, model->checkpoint);
  });
}

sidflow_status sidflow_model_load(const char* path, sidflow_model** out) {
  return guarded([&] {
    require(path && out, "model_load: null argument");
    *out = new sidflow_model{sidflow::load_checkpoint(path)};
  });
}

void sidflow_model_free(sidflow_model* model) { delete model; }

sidflow_status sidflow_model_config_json(const sidflow_model* model, char** out_json) {
  return guarded([&] {
    require(model && out_json, "model_config_json: null argument");
    const auto& m = model->checkpoint.model;
    const auto& r = model->checkpoint.retrieval;
    static constexpr const char* kPooling[] = {"cross_attn", "avg", "self_attn"};
    nlohmann::ordered_json j;
    j["model"] = {{"n_users", m.n_users},
                  {"n_items", m.n_items},
                  {"n_sid_levels", m.n_sid_levels},
                  {"codebook_size", m.codebook_size},
                  {"d_model", m.d_model},
                  {"k_max", m.k_max},
                  {"hidden", m.hidden},
                  {"pooling", kPooling[static_cast<int>(m.pooling)]},
                  {"features", m.features == sidflow::FeatureMode::kFull ? "full" : "id_only"}};
    j["retrieval"] = {{"k", r.k},
                      {"w", r.w},
                      {"n", r.n},
                      {"hash_bits", r.hash_bits},
                      {"tau", r.tau},
                      {"disable_sid_retrieval", r.disable_sid_retrieval},
                      {"disable_id_fill", r.disable_id_fill},
                      {"score_mode", r.score_mode == sidflow::ScoreMode::kStrictPrefix
                                         ? "strict_prefix"
                                         : "match_count"}};
    j["hasher_seed"] = model->checkpoint.hasher_seed;
    *out_json = dup_string(j.dump());
  });
}

// ---- evaluation, retrieval explanation, latency ---------------------------

sidflow_status sidflow_evaluate(const sidflow_model* model, const sidflow_dataset* d,
                                const sidflow_sidmap* m, sidflow_split split, int grouping,
                                sidflow_eval_report* out) {
  return guarded([&] {
    require(model && d && m && out, "evaluate: null argument");
    const sidflow::Scorer scorer(model->checkpoint, m->value);
    std::optional<sidflow::PopularityGroups> groups;
    if (grouping) groups = sidflow::long_tail_split(d->split.train, model->checkpoint.model.n_items);
    const sidflow::EvalReport r = sidflow::evaluate(scorer, d->store, split_of(d, split),
                                                    groups ? &*groups : nullptr);
    *out = sidflow_eval_report{};
    out->overall = to_c(r.overall);
    out->has_head = r.head.has_value();
    out->has_tail = r.tail.has_value();
    if (r.head) out->head = to_c(*r.head);
    if (r.tail) out->tail = to_c(*r.tail);
    out->n_head = r.n_head;
    out->n_tail = r.n_tail;
  });
}

sidflow_status sidflow_retrieve_json(const sidflow_dataset* d, const sidflow_sidmap* m,
                                     const sidflow_model* model,
                                     const sidflow_retrieval_params* retrieval, uint32_t user,
                                     uint32_t item, char** out_json) {
  return guarded([&] {
    require(d && m && out_json, "retrieve: null argument");
    const sidflow::SidMap& sids = m->value;
    sidflow::RetrievalConfig rc;
    if (retrieval != nullptr) {
      rc = to_config(*retrieval);
    } else if (model != nullptr) {
      rc = model->checkpoint.retrieval;
    }
    const sidflow::HistoryView history = d->store.behavior_sequence(user);
    SIDFLOW_CHECK(sids.contains(item), sidflow::ErrorKind::kInvalidArgument,
                  "retrieve: unknown item id " + std::to_string(item));
    for (sidflow::ItemId h : history.items) {
      SIDFLOW_CHECK(sids.contains(h), sidflow::ErrorKind::kData,
                    "retrieve: history item " + std::to_string(h) + " has no semantic id");
    }

    std::optional<sidflow::SignatureTable> signatures;
    if (model != nullptr) {
      const auto& ck = model->checkpoint;
      signatures = sidflow::item_signatures(ck.params, rc.hash_bits, ck.hasher_seed);
      SIDFLOW_CHECK(item < signatures->rows(), sidflow::ErrorKind::kInvalidArgument,
                    "retrieve: item " + std::to_string(item) + " is outside the model's catalog");
    }
    const sidflow::MultiRouteResult routes = sidflow::retrieve_all(
        history.items, sids, signatures ? &*signatures : nullptr, item, rc);

    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["user"] = user;
    j["target"] = item;
    j["target_sid"] = sid_json(sids[item]);
    j["history_length"] = history.size();
    j["config"] = {{"k", rc.k}, {"w", rc.w}, {"n", rc.n}, {"hash_bits", rc.hash_bits},
                   {"tau", rc.tau}};
    j["id_fill"] = {{"available", signatures.has_value() && !rc.disable_id_fill},
                    {"variance", routes.gate.variance},
                    {"tau", routes.gate.tau},
                    {"open", routes.gate.open}};
    auto& out_routes = j["routes"];
    for (auto tag : {sidflow::RouteTag::kTarget, sidflow::RouteTag::kRecent,
                     sidflow::RouteTag::kGlobal}) {
      auto entries = nlohmann::ordered_json::array();
      for (const auto& e : routes.route(tag).entries) {
        entries.push_back({{"position", e.position},
                           {"item", e.item},
                           {"score", e.score},
                           {"origin", e.origin == sidflow::EntryOrigin::kSid ? "sid" : "lsh"},
                           {"timestamp", history.timestamps[e.position]},
                           {"sid", sid_json(sids[e.item])}});
      }
      out_routes[std::string(sidflow::route_name(tag))] = std::move(entries);
    }
    *out_json = dup_string(j.dump());
  });
}

sidflow_status sidflow_bench(const sidflow_model* model, const sidflow_dataset* d,
                             const sidflow_sidmap* m, sidflow_split split, size_t max_instances,
                             size_t repeats, sidflow_bench_report* out) {
  return guarded([&] {
    require(model && d && m && out, "bench: null argument");
    const auto& all = split_of(d, split);
    const std::size_t n =
        max_instances == 0 ? all.size() : std::min<std::size_t>(max_instances, all.size());
    SIDFLOW_CHECK(n > 0, sidflow::ErrorKind::kData, "bench: the selected split is empty");
    const sidflow::Scorer scorer(model->checkpoint, m->value);
    const sidflow::BenchReport r = sidflow::benchmark(
        scorer, d->store, std::span<const sidflow::Instance>(all).first(n), repeats);
    out->retrieval = to_c(r.retrieval);
    out->end_to_end = to_c(r.end_to_end);
  });
}

}  // extern "C"
