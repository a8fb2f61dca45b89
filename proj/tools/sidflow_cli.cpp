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

// sidflow command-line tool. Talks to the library only through the C API.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sidflow/sidflow.h"

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Raised for any failing C API call; carries the exit status to use.
struct CommandError {
  int exit_code;
  std::string message;
};

void check(sidflow_status status, const std::string& context) {
  if (status == SIDFLOW_OK) return;
  const int code = status == SIDFLOW_ERR_INVALID_ARGUMENT ? kExitUsage : kExitData;
  throw CommandError{code, context + ": " + sidflow_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Embeddings = std::unique_ptr<sidflow_embeddings,
                                   Deleter<sidflow_embeddings, sidflow_embeddings_free>>;
using CodebookPtr = std::unique_ptr<sidflow_codebook, Deleter<sidflow_codebook, sidflow_codebook_free>>;
using SidMapPtr = std::unique_ptr<sidflow_sidmap, Deleter<sidflow_sidmap, sidflow_sidmap_free>>;
using DatasetPtr = std::unique_ptr<sidflow_dataset, Deleter<sidflow_dataset, sidflow_dataset_free>>;
using ModelPtr = std::unique_ptr<sidflow_model, Deleter<sidflow_model, sidflow_model_free>>;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CommandError{kExitData, "cannot read " + path.string()};
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

json file_entry(const fs::path& path) {
  return json{{"path", path.string()},
              {"bytes", fs::file_size(path)},
              {"sha256", sha256_file(path)}};
}

// Config snapshot, digests, seed, version and per-phase wall-clock timings.
class Manifest {
 public:
  Manifest(const CLI::App& cmd, json seed) {
    j_["schema_version"] = kSchemaVersion;
    j_["command"] = cmd.get_name();
    j_["version"] = sidflow_version();
    j_["seed"] = seed;
    json config = json::object();
    for (const CLI::Option* opt : cmd.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help") continue;
      if (opt->get_expected_min() == 0) {
        config[name] = opt->count() > 0;
      } else if (opt->count() > 0) {
        config[name] = opt->as<std::string>();
      } else {
        config[name] = opt->get_default_str();
      }
    }
    j_["config"] = std::move(config);
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
    j_["timings_ms"] = json::object();
  }

  void input(const std::string& role, const fs::path& path) { j_["inputs"][role] = file_entry(path); }
  void output(const std::string& role, const fs::path& path) {
    j_["outputs"][role] = file_entry(path);
  }

  template <typename Fn>
  auto phase(const std::string& name, Fn&& fn) {
    const auto t0 = Clock::now();
    struct Record {
      Manifest* self;
      std::string name;
      Clock::time_point t0;
      ~Record() {
        self->j_["timings_ms"][name] =
            std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      }
    } record{this, name, t0};
    return fn();
  }

  const json& value() const { return j_; }

  void write(const fs::path& path) const { write_json(path, j_); }

  static void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CommandError{kExitData, "cannot write " + path.string()};
    out << j.dump(2) << '\n';
  }

 private:
  json j_;
};

fs::path manifest_path(const fs::path& primary) {
  return fs::path(primary.string() + ".manifest.json");
}

void emit(const json& j, const std::string& output) {
  if (output.empty() || output == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    Manifest::write_json(output, j);
  }
}

sidflow_split parse_split(const std::string& s) {
  if (s == "train") return SIDFLOW_SPLIT_TRAIN;
  if (s == "validation") return SIDFLOW_SPLIT_VALIDATION;
  return SIDFLOW_SPLIT_TEST;
}

json metrics_json(const sidflow_metrics& m) {
  return json{{"auc", m.auc}, {"logloss", m.logloss}, {"n_samples", m.n_samples}};
}

json latency_json(const sidflow_latency& l) {
  return json{{"median_us", l.median_us},
              {"p99_us", l.p99_us},
              {"mean_us", l.mean_us},
              {"samples", l.samples}};
}

// ---- shared option groups -------------------------------------------------

struct DataOptions {
  std::string interactions;
  std::string sid_map;
  std::vector<double> ratios = {0.8, 0.1, 0.1};

  void add(CLI::App* cmd, bool need_sid_map = true) {
    cmd->add_option("--interactions", interactions, "Interactions CSV")->required();
    auto* sm = cmd->add_option("--sid-map", sid_map, "Semantic id map CSV");
    if (need_sid_map) sm->required();
    cmd->add_option("--split-ratios", ratios, "Train, validation and test fractions")
        ->expected(3)
        ->delimiter(',');
  }

  DatasetPtr load_dataset(Manifest& manifest) const {
    sidflow_dataset* d = nullptr;
    check(sidflow_dataset_load(interactions.c_str(), ratios[0], ratios[1], ratios[2], &d),
          "loading interactions");
    DatasetPtr dataset(d);
    manifest.input("interactions", interactions);
    return dataset;
  }

  SidMapPtr load_sid_map(Manifest& manifest) const {
    sidflow_sidmap* m = nullptr;
    check(sidflow_sidmap_load(sid_map.c_str(), &m), "loading sid map");
    SidMapPtr sids(m);
    manifest.input("sid_map", sid_map);
    return sids;
  }
};

struct RetrievalOptions {
  sidflow_retrieval_params params{};
  bool no_sid_retrieval = false;
  bool no_id_fill = false;
  bool match_count = false;

  RetrievalOptions() { sidflow_retrieval_params_default(&params); }

  void add(CLI::App* cmd) {
    cmd->add_option("--k", params.k, "Items kept per route")->check(CLI::PositiveNumber);
    cmd->add_option("--w", params.w, "Recent window length")->check(CLI::PositiveNumber);
    cmd->add_option("--n", params.n, "LSH fill size")->check(CLI::PositiveNumber);
    cmd->add_option("--hash-bits", params.hash_bits, "SimHash signature length")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tau", params.tau, "Confidence gate threshold")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--no-sid-retrieval", no_sid_retrieval, "Rank every route by SimHash only");
    cmd->add_flag("--no-id-fill", no_id_fill, "Never append LSH items to the target route");
    cmd->add_flag("--match-count", match_count, "Count equal codes instead of strict prefixes");
  }

  sidflow_retrieval_params resolved() const {
    sidflow_retrieval_params p = params;
    p.disable_sid_retrieval = no_sid_retrieval;
    p.disable_id_fill = no_id_fill;
    p.match_count_scoring = match_count;
    return p;
  }

  // True when any retrieval option was given explicitly.
  static bool any_set(const CLI::App* cmd) {
    for (const char* name : {"--k", "--w", "--n", "--hash-bits", "--tau", "--no-sid-retrieval",
                             "--no-id-fill", "--match-count"}) {
      if (cmd->count(name) > 0) return true;
    }
    return false;
  }
};

// ---- subcommands ----------------------------------------------------------

struct SynthCommand {
  sidflow_synth_params params{};
  std::string out_dir = ".";

  SynthCommand() { sidflow_synth_params_default(&params); }

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("synth", "Write a seeded synthetic interaction log and item embeddings");
    cmd->add_option("--seed", params.seed, "Root seed");
    cmd->add_option("--users", params.n_users, "Number of users")->check(CLI::PositiveNumber);
    cmd->add_option("--items", params.n_items, "Number of items")->check(CLI::PositiveNumber);
    cmd->add_option("--dim", params.d_enc, "Embedding dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--history", params.history_len, "Interactions per user")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--clusters", params.n_clusters, "Top-level item clusters")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--subclusters", params.n_subclusters, "Sub-clusters per cluster")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--ref-codebook-size", params.ref_codebook_size,
                    "Codebook size of the tokenization that drives the labels")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out-dir", out_dir, "Output directory");
    cmd->callback([this, cmd] { run(*cmd); });
  }

  void run(const CLI::App& cmd) {
    Manifest manifest(cmd, params.seed);
    fs::create_directories(out_dir);
    const fs::path interactions = fs::path(out_dir) / "interactions.csv";
    const fs::path embeddings = fs::path(out_dir) / "embeddings.embf";
    manifest.phase("generate", [&] {
      check(sidflow_synth_write(&params, interactions.c_str(), embeddings.c_str()),
            "generating synthetic data");
    });
    manifest.output("interactions", interactions);
    manifest.output("embeddings", embeddings);
    manifest.write(fs::path(out_dir) / "synth.manifest.json");
    std::cerr << "wrote " << interactions.string() << " and " << embeddings.string() << '\n';
  }
};

struct TokenizeCommand {
  std::string embeddings;
  std::string codebook_out = "codebook.sidc";
  std::string sid_map_out = "sid_map.csv";
  sidflow_tokenizer_params params{};
  std::uint64_t seed = 7;

  TokenizeCommand() { sidflow_tokenizer_params_default(&params); }

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("tokenize", "Fit residual codebooks and assign semantic ids");
    cmd->add_option("--embeddings", embeddings, "EMBF embedding file")->required();
    cmd->add_option("--codebook", codebook_out, "Codebook output path");
    cmd->add_option("--sid-map", sid_map_out, "Semantic id map output path");
    cmd->add_option("--levels", params.n_levels, "Residual levels")->check(CLI::Range(1, 4));
    cmd->add_option("--codebook-size", params.codebook_size, "Centroids per level")
        ->check(CLI::Range(1, 65536));
    cmd->add_option("--max-iters", params.max_iters, "K-means iterations per level")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", params.batch_size, "Mini-batch size, 0 for full batch");
    cmd->add_option("--seed", seed, "Root seed");
    cmd->callback([this, cmd] { run(*cmd); });
  }

  void run(const CLI::App& cmd) {
    Manifest manifest(cmd, seed);
    params.seed = sidflow_derive_seed(seed, "tokenizer");
    sidflow_embeddings* raw = nullptr;
    manifest.phase("load", [&] {
      check(sidflow_embeddings_load(embeddings.c_str(), &raw), "loading embeddings");
    });
    const Embeddings emb(raw);
    manifest.input("embeddings", embeddings);
    sidflow_codebook* cb = nullptr;
    sidflow_sidmap* sm = nullptr;
    manifest.phase("fit", [&] { check(sidflow_tokenize(emb.get(), &params, &cb, &sm), "tokenizing"); });
    const CodebookPtr codebook(cb);
    const SidMapPtr sids(sm);
    manifest.phase("save", [&] {
      check(sidflow_codebook_save(codebook.get(), codebook_out.c_str()), "saving codebook");
      check(sidflow_sidmap_save(sids.get(), sid_map_out.c_str()), "saving sid map");
    });
    json errors = json::array();
    for (std::size_t l = 0; l <= params.n_levels; ++l) {
      double err = 0.0;
      check(sidflow_quantization_error(emb.get(), codebook.get(), l, &err), "quantization error");
      errors.push_back(err);
    }
    manifest.output("codebook", codebook_out);
    manifest.output("sid_map", sid_map_out);
    json m = manifest.value();
    m["quantization_error_by_level"] = std::move(errors);
    Manifest::write_json(manifest_path(sid_map_out), m);
    std::cerr << "tokenized " << sidflow_sidmap_n_items(sids.get()) << " items into "
              << sid_map_out << '\n';
  }
};

struct TrainCommand {
  DataOptions data;
  RetrievalOptions retrieval;
  sidflow_model_params model{};
  sidflow_train_params train{};
  std::vector<std::uint32_t> hidden;
  std::string pooling = "cross_attn";
  std::string features = "full";
  std::string out = "model.r2lc";
  std::string log;
  bool quiet = false;

  TrainCommand() {
    sidflow_model_params_default(&model);
    sidflow_train_params_default(&train);
    hidden.assign(model.hidden, model.hidden + model.n_hidden);
  }

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Train the refinement model for one pass over the train split");
    data.add(cmd);
    retrieval.add(cmd);
    cmd->add_option("--out", out, "Checkpoint output path");
    cmd->add_option("--log", log, "Per-step loss log (CSV); defaults to <out>.log.csv");
    cmd->add_option("--seed", train.seed, "Root seed");
    cmd->add_option("--lr", train.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
    cmd->add_option("--batch-size", train.batch_size, "Examples per step")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", train.epochs, "Passes over the train split")->check(CLI::PositiveNumber);
    cmd->add_option("--resig-interval", train.resig_interval,
                    "Steps between signature refreshes, 0 for once per epoch");
    cmd->add_option("--d-model", model.d_model, "Embedding dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--hidden", hidden, "Hidden layer sizes of the head")->delimiter(',');
    cmd->add_option("--pooling", pooling, "Route pooling")
        ->check(CLI::IsMember({"cross_attn", "avg", "self_attn"}));
    cmd->add_option("--features", features, "Representation levels")
        ->check(CLI::IsMember({"full", "id_only"}));
    cmd->add_flag("--quiet", quiet, "No progress output");
    cmd->callback([this, cmd] { run(*cmd); });
  }

  void run(const CLI::App& cmd) {
    if (hidden.size() > SIDFLOW_MAX_HIDDEN) {
      throw CommandError{kExitUsage, "--hidden: at most 8 layers"};
    }
    model.n_hidden = static_cast<std::uint32_t>(hidden.size());
    std::copy(hidden.begin(), hidden.end(), model.hidden);
    model.pooling = pooling == "avg"         ? SIDFLOW_POOL_AVERAGE
                    : pooling == "self_attn" ? SIDFLOW_POOL_SELF_ATTENTION
                                             : SIDFLOW_POOL_CROSS_ATTENTION;
    model.features = features == "id_only" ? SIDFLOW_FEATURES_ID_ONLY : SIDFLOW_FEATURES_FULL;
    if (log.empty()) log = out + ".log.csv";

    Manifest manifest(cmd, train.seed);
    DatasetPtr dataset;
    SidMapPtr sids;
    manifest.phase("load", [&] {
      dataset = data.load_dataset(manifest);
      sids = data.load_sid_map(manifest);
    });

    struct LogState {
      std::ofstream* log;
      bool quiet;
    };
    std::ofstream log_out(log, std::ios::binary);
    if (!log_out) throw CommandError{kExitData, "cannot write " + log};
    log_out << "epoch,step,examples,loss\n";
    LogState state{&log_out, quiet};
    auto on_step = [](const sidflow_train_progress* p, void* user) {
      auto* s = static_cast<LogState*>(user);
      char line[128];
      std::snprintf(line, sizeof line, "%u,%llu,%llu,%.17g\n", p->epoch,
                    static_cast<unsigned long long>(p->step),
                    static_cast<unsigned long long>(p->examples), p->loss);
      *s->log << line;
      if (!s->quiet && (p->step % 100 == 0 || p->step == p->total_steps)) {
        std::fprintf(stderr, "step %llu/%llu loss %.4f\n", static_cast<unsigned long long>(p->step),
                     static_cast<unsigned long long>(p->total_steps), p->loss);
      }
    };

    const sidflow_retrieval_params rp = retrieval.resolved();
    sidflow_model* raw = nullptr;
    manifest.phase("train", [&] {
      check(sidflow_train(dataset.get(), sids.get(), &model, &rp, &train, on_step, &state, &raw),
            "training");
    });
    const ModelPtr trained(raw);
    log_out.close();
    manifest.phase("save", [&] {
      check(sidflow_model_save(trained.get(), out.c_str()), "saving checkpoint");
    });
    manifest.output("checkpoint", out);
    manifest.output("train_log", log);
    manifest.write(manifest_path(out));
    if (!quiet) std::cerr << "wrote " << out << '\n';
  }
};

struct EvalCommand {
  DataOptions data;
  std::string checkpoint;
  std::string split = "test";
  std::string output;
  bool no_groups = false;
  bool no_timing = false;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "AUC and LogLoss of a checkpoint, overall and by popularity group");
    data.add(cmd);
    cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    cmd->add_option("--split", split, "Split to evaluate")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    cmd->add_option("--output", output, "Report path, stdout when omitted");
    cmd->add_flag("--no-groups", no_groups, "Skip the head/tail breakdown");
    cmd->add_flag("--no-timing", no_timing, "Leave timings out of the report");
    cmd->callback([this, cmd] { run(*cmd); });
  }

  void run(const CLI::App& cmd) {
    Manifest manifest(cmd, nullptr);
    ModelPtr model;
    DatasetPtr dataset;
    SidMapPtr sids;
    manifest.phase("load", [&] {
      sidflow_model* raw = nullptr;
      check(sidflow_model_load(checkpoint.c_str(), &raw), "loading checkpoint");
      model.reset(raw);
      manifest.input("checkpoint", checkpoint);
      dataset = data.load_dataset(manifest);
      sids = data.load_sid_map(manifest);
    });
    sidflow_eval_report report{};
    const auto t0 = Clock::now();
    manifest.phase("evaluate", [&] {
      check(sidflow_evaluate(model.get(), dataset.get(), sids.get(), parse_split(split),
                             no_groups ? 0 : 1, &report),
            "evaluating");
    });
    const double eval_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

    json j;
    j["schema_version"] = kSchemaVersion;
    j["split"] = split;
    j["overall"] = metrics_json(report.overall);
    if (!no_groups) {
      j["head"] = report.has_head ? metrics_json(report.head) : json(nullptr);
      j["tail"] = report.has_tail ? metrics_json(report.tail) : json(nullptr);
      j["group_sizes"] = {{"head", report.n_head}, {"tail", report.n_tail}};
    }
    if (!no_timing) {
      j["timing"] = {{"total_ms", eval_ms},
                     {"per_sample_us", 1000.0 * eval_ms /
                                           static_cast<double>(report.overall.n_samples)}};
    }
    emit(j, output);
    if (!output.empty() && output != "-") {
      manifest.output("report", output);
      manifest.write(manifest_path(output));
    }
  }
};

struct RetrieveCommand {
  DataOptions data;
  RetrievalOptions retrieval;
  std::string checkpoint;
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::string output;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("retrieve", "Explain Stage-1 retrieval for one (user, item) pair");
    data.add(cmd);
    retrieval.add(cmd);
    cmd->add_option("--user", user, "User id")->required();
    cmd->add_option("--item", item, "Target item id")->required();
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint supplying signatures for the ID fill");
    cmd->add_option("--output", output, "Report path, stdout when omitted");
    cmd->callback([this, cmd] { run(*cmd); });
  }

  void run(const CLI::App& cmd) {
    Manifest manifest(cmd, nullptr);
    DatasetPtr dataset = data.load_dataset(manifest);
    SidMapPtr sids = data.load_sid_map(manifest);
    ModelPtr model;
    if (!checkpoint.empty()) {
      sidflow_model* raw = nullptr;
      check(sidflow_model_load(checkpoint.c_str(), &raw), "loading checkpoint");
      model.reset(raw);
      manifest.input("checkpoint", checkpoint);
    }
    const sidflow_retrieval_params rp = retrieval.resolved();
    const bool explicit_params = !model || RetrievalOptions::any_set(&cmd);
    char* raw_json = nullptr;
    check(sidflow_retrieve_json(dataset.get(), sids.get(), model.get(),
                                explicit_params ? &rp : nullptr, user, item, &raw_json),
          "retrieving");
    json j = json::parse(raw_json);
    sidflow_string_free(raw_json);
    emit(j, output);
    if (!output.empty() && output != "-") {
      manifest.output("report", output);
      manifest.write(manifest_path(output));
    }
  }
};

struct BenchCommand {
  DataOptions data;
  std::string checkpoint;
  std::string split = "test";
  std::size_t max_instances = 2000;
  std::size_t repeats = 1;
  std::string output;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench", "Per-sample latency of Stage-1 and Stage-1+2");
    data.add(cmd);
    cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    cmd->add_option("--split", split, "Split to time")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    cmd->add_option("--max-instances", max_instances, "Instances to time, 0 for all");
    cmd->add_option("--repeats", repeats, "Passes over the instances")->check(CLI::PositiveNumber);
    cmd->add_option("--output", output, "Report path, stdout when omitted");
    cmd->callback([this, cmd] { run(*cmd); });
  }

  void run(const CLI::App& cmd) {
    Manifest manifest(cmd, nullptr);
    ModelPtr model;
    sidflow_model* raw = nullptr;
    check(sidflow_model_load(checkpoint.c_str(), &raw), "loading checkpoint");
    model.reset(raw);
    manifest.input("checkpoint", checkpoint);
    DatasetPtr dataset = data.load_dataset(manifest);
    SidMapPtr sids = data.load_sid_map(manifest);
    sidflow_bench_report report{};
    manifest.phase("bench", [&] {
      check(sidflow_bench(model.get(), dataset.get(), sids.get(), parse_split(split),
                          max_instances, repeats, &report),
            "benchmarking");
    });
    json j;
    j["schema_version"] = kSchemaVersion;
    j["split"] = split;
    j["threads"] = 1;
    j["stage1"] = latency_json(report.retrieval);
    j["stage1_plus_stage2"] = latency_json(report.end_to_end);
    j["manifest"] = manifest.value();
    emit(j, output);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sidflow: semantic-id retrieval and refinement for long user histories"};
  app.set_version_flag("--version", std::string(sidflow_version()));
  app.set_config("--config", "", "Config file of `key = value` lines ([command] sections); flags win");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthCommand synth;
  TokenizeCommand tokenize;
  TrainCommand train;
  EvalCommand eval;
  RetrieveCommand retrieve;
  BenchCommand bench;
  synth.add(app);
  tokenize.add(app);
  train.add(app);
  eval.add(app);
  retrieve.add(app);
  bench.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.exit_code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
