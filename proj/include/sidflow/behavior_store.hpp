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

// Interaction logs, per-user behavior sequences, CTR instances, the temporal
// train/validation/test split, and the synthetic data generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sidflow/common.hpp"
#include "sidflow/tokenizer.hpp"

namespace sidflow {

inline constexpr std::size_t kMaxHistory = 300;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;
  std::uint8_t label = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// CSV with header `user_id,item_id,timestamp,label`. Ids must be >= 1.
std::vector<Interaction> load_interactions(const std::filesystem::path& path);
void save_interactions(const std::filesystem::path& path,
                       std::span<const Interaction> interactions);

/// Time-ordered view of (a window of) one user's clicked items.
struct HistoryView {
  std::span<const ItemId> items;
  std::span<const std::int64_t> timestamps;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

/// One CTR sample. The history is [history_begin, history_end) of the
/// user's click timeline: every click strictly before `timestamp`, capped to
/// the most recent kMaxHistory.
struct Instance {
  UserId user = 0;
  ItemId target = 0;
  std::int64_t timestamp = 0;
  std::uint8_t label = 0;
  std::uint32_t history_begin = 0;
  std::uint32_t history_end = 0;

  std::size_t history_size() const { return history_end - history_begin; }
};

class BehaviorStore {
 public:
  /// One Instance per interaction, in input order.
  static BehaviorStore build(std::span<const Interaction> interactions,
                             std::size_t max_history = kMaxHistory);

  const std::vector<Instance>& instances() const { return instances_; }

  /// Largest user id seen (ids are 1-based; 0 means no users).
  UserId max_user() const { return static_cast<UserId>(timelines_.size() - 1); }
  ItemId max_item() const { return max_item_; }

  HistoryView history(const Instance& instance) const;

  /// The user's most recent clicks (at most max_history), oldest first.
  HistoryView behavior_sequence(UserId user) const;

 private:
  struct Timeline {
    std::vector<ItemId> items;
    std::vector<std::int64_t> timestamps;
  };

  std::vector<Timeline> timelines_{1};
  std::vector<Instance> instances_;
  std::size_t max_history_ = kMaxHistory;
  ItemId max_item_ = 0;
};

struct DatasetSplit {
  std::vector<Instance> train;
  std::vector<Instance> validation;
  std::vector<Instance> test;
};

/// Stable sort by target timestamp, then cut at floor(n * r0) and
/// floor(n * (r0 + r1)).
DatasetSplit temporal_split(std::span<const Instance> instances,
                            std::array<double, 3> ratios = {0.8, 0.1, 0.1});

struct SynthConfig {
  std::size_t n_users = 1000;
  std::size_t n_items = 2000;
  std::size_t d_enc = 32;
  std::size_t history_len = 100;  // interactions per user
  std::uint64_t seed = 7;
  std::size_t n_clusters = 8;
  std::size_t n_subclusters = 4;  // per cluster
  double interest_prob = 0.5;     // chance an interaction comes from the user's interests
  // Reference tokenization driving the labels. Tokenizing the emitted
  // embeddings with these options and derive_seed(seed, "tokenizer")
  // reproduces it exactly.
  std::size_t ref_levels = 3;
  std::size_t ref_codebook_size = 16;
  std::size_t ref_max_iters = 50;
  // Click probability: base + gain * (1 - exp(-matches / scale)), where
  // matches counts earlier clicks sharing the target's level-2 prefix.
  double click_base = 0.15;
  double click_gain = 0.75;
  double click_scale = 2.0;
};

struct SyntheticData {
  EmbeddingMatrix embeddings;
  std::vector<Interaction> interactions;
};

/// Tokenizer options the generator uses for its reference tokenization.
TokenizerOptions reference_tokenizer(const SynthConfig& config);

SyntheticData generate_synthetic(const SynthConfig& config);

}  // namespace sidflow
