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

// Ranking and calibration metrics, popularity head/tail grouping, and the
// no-gradient Stage-1 + Stage-2 evaluation and latency benchmark.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sidflow/behavior_store.hpp"
#include "sidflow/model.hpp"

namespace sidflow {

struct Metrics {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n_samples = 0;
};

/// Mann-Whitney statistic with average ranks for ties. Throws kData when
/// the labels hold a single class.
double auc(std::span<const double> preds, std::span<const std::uint8_t> labels);

double logloss_metric(std::span<const double> preds, std::span<const std::uint8_t> labels);

struct PopularityGroups {
  std::vector<ItemId> head;  // most popular first
  std::vector<ItemId> tail;
  std::vector<std::uint8_t> is_head;  // indexed by item id, 0 = padding

  bool contains_head(ItemId item) const { return item < is_head.size() && is_head[item]; }
};

/// Items 1..n_items ranked by count descending, then id ascending; the first
/// ceil(0.2 n) form the head. Counts come from `interactions` only.
PopularityGroups long_tail_split(std::span<const Interaction> interactions, std::size_t n_items);
PopularityGroups long_tail_split(std::span<const Instance> instances, std::size_t n_items);

/// A trained checkpoint with its signature table, ready for inference. Holds
/// references: the checkpoint and SID map must outlive the scorer.
class Scorer {
 public:
  Scorer(const Checkpoint& checkpoint, const SidMap& sids);

  const Checkpoint& checkpoint() const { return checkpoint_; }
  const SignatureTable& signatures() const { return signatures_; }
  const SidMap& sids() const { return sids_; }

  MultiRouteResult retrieve(const BehaviorStore& store, const Instance& instance) const;
  double predict(const BehaviorStore& store, const Instance& instance) const;
  std::vector<double> predict(const BehaviorStore& store,
                              std::span<const Instance> instances) const;

 private:
  const Checkpoint& checkpoint_;
  const SidMap& sids_;
  SignatureTable signatures_;
};

struct EvalReport {
  Metrics overall;
  std::optional<Metrics> head;  // absent when a group is empty or single-class
  std::optional<Metrics> tail;
  std::size_t n_head = 0;
  std::size_t n_tail = 0;
};

/// Throws kData on an empty split. `groups` may be null to skip grouping.
EvalReport evaluate(const Scorer& scorer, const BehaviorStore& store,
                    std::span<const Instance> split, const PopularityGroups* groups);

struct LatencyStats {
  double median_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  std::size_t samples = 0;
};

/// Nearest-rank percentile of an unsorted sample; q in [0, 1].
double percentile(std::vector<double> values, double q);

struct BenchReport {
  LatencyStats retrieval;   // Stage-1 only
  LatencyStats end_to_end;  // Stage-1 + Stage-2
};

/// Times every instance once per repeat, single-threaded.
BenchReport benchmark(const Scorer& scorer, const BehaviorStore& store,
                      std::span<const Instance> instances, std::size_t repeats = 1);

}  // namespace sidflow
