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

#include "sidflow/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sidflow/trainer.hpp"

namespace sidflow {

double auc(std::span<const double> preds, std::span<const std::uint8_t> labels) {
  SIDFLOW_CHECK(preds.size() == labels.size(), ErrorKind::kInvalidArgument,
                "auc: predictions and labels differ in length");
  const std::size_t n = preds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a] < preds[b];
  });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && preds[order[j]] == preds[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  SIDFLOW_CHECK(positives > 0 && negatives > 0, ErrorKind::kData,
                "auc: undefined without both positive and negative labels");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double logloss_metric(std::span<const double> preds, std::span<const std::uint8_t> labels) {
  return bce_loss(preds, labels);
}

namespace {

PopularityGroups split_by_count(const std::vector<std::size_t>& counts, std::size_t n_items) {
  std::vector<ItemId> ranked(n_items);
  std::iota(ranked.begin(), ranked.end(), ItemId{1});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](ItemId a, ItemId b) { return counts[a] > counts[b]; });
  const auto n_head = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(n_items)));
  PopularityGroups g;
  g.head.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n_head));
  g.tail.assign(ranked.begin() + static_cast<std::ptrdiff_t>(n_head), ranked.end());
  g.is_head.assign(n_items + 1, 0);
  for (ItemId item : g.head) g.is_head[item] = 1;
  return g;
}

}  // namespace

PopularityGroups long_tail_split(std::span<const Interaction> interactions, std::size_t n_items) {
  SIDFLOW_CHECK(n_items >= 1, ErrorKind::kInvalidArgument, "long_tail_split: empty catalog");
  std::vector<std::size_t> counts(n_items + 1, 0);
  for (const auto& x : interactions) {
    if (x.item <= n_items) ++counts[x.item];
  }
  return split_by_count(counts, n_items);
}

PopularityGroups long_tail_split(std::span<const Instance> instances, std::size_t n_items) {
  SIDFLOW_CHECK(n_items >= 1, ErrorKind::kInvalidArgument, "long_tail_split: empty catalog");
  std::vector<std::size_t> counts(n_items + 1, 0);
  for (const auto& x : instances) {
    if (x.target <= n_items) ++counts[x.target];
  }
  return split_by_count(counts, n_items);
}

Scorer::Scorer(const Checkpoint& checkpoint, const SidMap& sids)
    : checkpoint_(checkpoint),
      sids_(sids),
      signatures_(item_signatures(checkpoint.params, checkpoint.retrieval.hash_bits,
                                  checkpoint.hasher_seed)) {
  const ModelConfig& m = checkpoint.model;
  SIDFLOW_CHECK(sids.n_items() <= m.n_items, ErrorKind::kData,
                "sid map covers " + std::to_string(sids.n_items()) +
                    " items but the checkpoint was trained on " + std::to_string(m.n_items));
  SIDFLOW_CHECK(m.features == FeatureMode::kIdOnly || sids.n_levels() >= m.n_sid_levels,
                ErrorKind::kData, "sid map has fewer levels than the checkpoint expects");
}

MultiRouteResult Scorer::retrieve(const BehaviorStore& store, const Instance& instance) const {
  return retrieve_all(store.history(instance).items, sids_, &signatures_, instance.target,
                      checkpoint_.retrieval);
}

double Scorer::predict(const BehaviorStore& store, const Instance& instance) const {
  const ModelInput input = make_input(instance.user, instance.target, retrieve(store, instance),
                                      checkpoint_.model.k_max);
  return forward(checkpoint_.params, checkpoint_.model, input, sids_);
}

std::vector<double> Scorer::predict(const BehaviorStore& store,
                                    std::span<const Instance> instances) const {
  std::vector<double> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(predict(store, inst));
  return out;
}

namespace {

std::optional<Metrics> group_metrics(const std::vector<double>& preds,
                                     const std::vector<std::uint8_t>& labels) {
  const auto positives = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    return std::nullopt;
  }
  return Metrics{auc(preds, labels), logloss_metric(preds, labels), preds.size()};
}

}  // namespace

EvalReport evaluate(const Scorer& scorer, const BehaviorStore& store,
                    std::span<const Instance> split, const PopularityGroups* groups) {
  SIDFLOW_CHECK(!split.empty(), ErrorKind::kData, "evaluate: empty split");
  const std::vector<double> preds = scorer.predict(store, split);
  std::vector<std::uint8_t> labels;
  labels.reserve(split.size());
  for (const auto& inst : split) labels.push_back(inst.label);

  EvalReport report;
  report.overall = Metrics{auc(preds, labels), logloss_metric(preds, labels), preds.size()};
  if (groups == nullptr) return report;

  std::vector<double> head_p, tail_p;
  std::vector<std::uint8_t> head_y, tail_y;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (groups->contains_head(split[i].target)) {
      head_p.push_back(preds[i]);
      head_y.push_back(labels[i]);
    } else {
      tail_p.push_back(preds[i]);
      tail_y.push_back(labels[i]);
    }
  }
  report.n_head = head_p.size();
  report.n_tail = tail_p.size();
  report.head = group_metrics(head_p, head_y);
  report.tail = group_metrics(tail_p, tail_y);
  return report;
}

double percentile(std::vector<double> values, double q) {
  SIDFLOW_CHECK(!values.empty() && q >= 0.0 && q <= 1.0, ErrorKind::kInvalidArgument,
                "percentile: need a non-empty sample and q in [0, 1]");
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  const std::size_t idx = rank == 0 ? 0 : rank - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx),
                   values.end());
  return values[idx];
}

namespace {

LatencyStats summarize(const std::vector<double>& us) {
  LatencyStats s;
  s.samples = us.size();
  s.median_us = percentile(us, 0.5);
  s.p99_us = percentile(us, 0.99);
  s.mean_us = std::accumulate(us.begin(), us.end(), 0.0) / static_cast<double>(us.size());
  return s;
}

}  // namespace

BenchReport benchmark(const Scorer& scorer, const BehaviorStore& store,
                      std::span<const Instance> instances, std::size_t repeats) {
  SIDFLOW_CHECK(!instances.empty() && repeats >= 1, ErrorKind::kInvalidArgument,
                "benchmark: need at least one instance and one repeat");
  using Clock = std::chrono::steady_clock;
  const Checkpoint& ck = scorer.checkpoint();
  std::vector<double> stage1, both;
  stage1.reserve(instances.size() * repeats);
  both.reserve(instances.size() * repeats);
  volatile double sink = 0.0;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    for (const auto& inst : instances) {
      const auto t0 = Clock::now();
      const MultiRouteResult routes = scorer.retrieve(store, inst);
      const auto t1 = Clock::now();
      const ModelInput input = make_input(inst.user, inst.target, routes, ck.model.k_max);
      sink = sink + forward(ck.params, ck.model, input, scorer.sids());
      const auto t2 = Clock::now();
      stage1.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
      both.push_back(std::chrono::duration<double, std::micro>(t2 - t0).count());
    }
  }
  return BenchReport{summarize(stage1), summarize(both)};
}

}  // namespace sidflow
