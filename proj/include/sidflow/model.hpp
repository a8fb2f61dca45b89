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

#pragma once

// Stage-2 refinement model: per-level embeddings, target-aware pooling of
// each retrieved route, softmax-gated fusion across routes and then across
// levels (ID, SID1..SIDn), and an MLP head with a two-logit softmax.
// Everything runs in double precision with hand-written reverse-mode
// gradients.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sidflow/retrieval_pipeline.hpp"
#include "sidflow/tokenizer.hpp"

namespace sidflow {

enum class PoolingMode : std::uint8_t {
  kCrossAttention,  // softmax(q K^T / sqrt(d)) V + target
  kAverage,         // masked mean of V + target
  kSelfAttention,   // mean of token-token attention outputs + target
};

enum class FeatureMode : std::uint8_t {
  kFull,    // ID level plus every SID level
  kIdOnly,  // ID level only
};

struct ModelConfig {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_sid_levels = 3;
  std::size_t codebook_size = 256;
  std::size_t d_model = 16;
  std::size_t k_max = 22;  // tokens per route, K + N
  std::vector<std::size_t> hidden = {200, 80};
  PoolingMode pooling = PoolingMode::kCrossAttention;
  FeatureMode features = FeatureMode::kFull;

  /// Levels fused by the level gate: 1 + n_sid_levels, or 1 for kIdOnly.
  std::size_t n_levels() const {
    return features == FeatureMode::kFull ? 1 + n_sid_levels : 1;
  }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Attention projections and route gate of one level. Projections are
/// shared by the three routes.
struct LevelParams {
  Tensor w_q, w_k, w_v;           // d x d, row-vector convention: q = t W_Q
  Tensor route_gate_w;            // 3 x 3d
  Tensor route_gate_b;            // 1 x 3

  friend bool operator==(const LevelParams&, const LevelParams&) = default;
};

struct ModelParams {
  Tensor user_emb;                // (n_users + 1) x d
  Tensor item_emb;                // (n_items + 1) x d
  std::vector<Tensor> sid_emb;    // per SID level: (D + 1) x d, row = code + 1
  std::vector<LevelParams> levels;
  Tensor level_gate_w;            // L x L*d
  Tensor level_gate_b;            // 1 x L
  std::vector<Tensor> mlp_w;      // out x in
  std::vector<Tensor> mlp_b;      // 1 x out

  /// Visits every tensor in checkpoint order with a stable name.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  static ModelParams zeros(const ModelConfig& config);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Embeddings ~ N(0, 0.1^2); projections Xavier-uniform; linear layers
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Padding rows start at zero.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Building blocks. Each forward fills a cache that its backward consumes.

struct PoolCache {
  PoolingMode mode = PoolingMode::kCrossAttention;
  std::size_t n = 0;  // token rows, masked included
  std::size_t d = 0;
  std::vector<double> target;
  std::vector<double> tokens;        // n x d
  std::vector<std::uint8_t> mask;    // 1 = real token
  std::vector<std::size_t> active;   // unmasked row indices
  std::vector<double> weights;       // n, zero on masked rows
  // cross-attention
  std::vector<double> q, u, mixed;   // mixed = sum_i a_i e_i
  // self-attention, over active rows only (m = active.size())
  std::vector<double> sq, sk, sv, attn, heads;  // m x d, m x m, m x d
  std::vector<double> out;
};

/// Pools one route at one level. An all-masked route returns the target.
/// For kCrossAttention `weights` are the attention weights; for kAverage the
/// uniform weights; for kSelfAttention the mean attention each token receives.
std::vector<double> pool_route(std::span<const double> target, std::span<const double> tokens,
                               std::span<const std::uint8_t> mask, const LevelParams& params,
                               PoolingMode mode, PoolCache* cache = nullptr);

/// Accumulates gradients of a loss with d(loss)/d(out) = g_out.
void pool_route_backward(const PoolCache& cache, std::span<const double> g_out,
                         const LevelParams& params, LevelParams& grads,
                         std::span<double> g_target, std::span<double> g_tokens);

struct FusionCache {
  std::size_t m = 0;
  std::size_t d = 0;
  std::vector<double> inputs;   // m x d, also the gate input z
  std::vector<double> weights;  // softmax(W z + b)
  std::vector<double> out;
};

/// Softmax-gated convex combination of m vectors: s = W z + b with z the
/// concatenated inputs, out = sum_k softmax(s)_k inputs_k. Used for both the
/// route gate (m = 3) and the level gate (m = levels).
std::vector<double> gated_fusion(std::span<const double> inputs, std::size_t m,
                                 const Tensor& w, const Tensor& b, FusionCache* cache = nullptr);

void gated_fusion_backward(const FusionCache& cache, std::span<const double> g_out,
                           const Tensor& w, Tensor& g_w, Tensor& g_b,
                           std::span<double> g_inputs);

inline std::vector<double> route_fusion(std::span<const double> i_target,
                                        std::span<const double> i_recent,
                                        std::span<const double> i_global,
                                        const LevelParams& params, FusionCache* cache = nullptr) {
  std::vector<double> z(i_target.begin(), i_target.end());
  z.insert(z.end(), i_recent.begin(), i_recent.end());
  z.insert(z.end(), i_global.begin(), i_global.end());
  return gated_fusion(z, 3, params.route_gate_w, params.route_gate_b, cache);
}

// ---------------------------------------------------------------------------
// Whole model.

/// Retrieved item ids per route (target, recent, global), at most k_max each.
struct ModelInput {
  UserId user = 0;
  ItemId target = 0;
  std::array<std::vector<ItemId>, 3> routes;
};

ModelInput make_input(UserId user, ItemId target, const MultiRouteResult& routes,
                      std::size_t k_max);

struct LevelTrace {
  std::size_t target_row = 0;
  std::array<std::vector<std::size_t>, 3> token_rows;  // k_max each, 0 = padding
  std::array<PoolCache, 3> pools;
  FusionCache route;
};

struct ForwardTrace {
  UserId user = 0;
  ItemId target = 0;
  std::vector<LevelTrace> levels;
  FusionCache level;
  std::vector<std::vector<double>> activations;  // head inputs per layer
  std::vector<std::vector<double>> preacts;      // head pre-activations
  std::array<double, 2> probs{};
};

/// Click probability (class-1 softmax output). Throws kInvalidArgument for
/// ids outside the model's tables.
double forward(const ModelParams& params, const ModelConfig& config, const ModelInput& input,
               const SidMap& sids, ForwardTrace* trace = nullptr);

/// Adds scale * d(-log p_label)/d(params) into `grads`.
void backward(const ModelParams& params, const ModelConfig& config, const ForwardTrace& trace,
              int label, double scale, ModelParams& grads);

/// -log p_label from a trace, computed from the logits for stability.
double example_loss(const ForwardTrace& trace, int label);

/// Mean binary cross-entropy with predictions clamped to [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> preds, std::span<const std::uint8_t> labels);

// ---------------------------------------------------------------------------
// Checkpoints: "R2LC", u16 version, config block, u32 tensor count, then per
// tensor a u16-length name, u32 rows, u32 cols and little-endian f64 data.

struct Checkpoint {
  ModelConfig model;
  RetrievalConfig retrieval;
  std::uint64_t hasher_seed = 0;
  ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sidflow
