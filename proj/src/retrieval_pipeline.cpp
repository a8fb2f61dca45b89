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

#include "sidflow/retrieval_pipeline.hpp"

#include <string>

namespace sidflow {

void RetrievalConfig::validate() const {
  SIDFLOW_CHECK(k >= 1 && w >= 1 && n >= 1 && hash_bits >= 1, ErrorKind::kInvalidArgument,
                "retrieval config: K, W, N and H must all be >= 1");
  SIDFLOW_CHECK(tau >= 0.0, ErrorKind::kInvalidArgument, "retrieval config: tau must be >= 0");
}

const RouteResult& MultiRouteResult::route(RouteTag tag) const {
  switch (tag) {
    case RouteTag::kTarget: return target;
    case RouteTag::kRecent: return recent;
    case RouteTag::kGlobal: return global;
  }
  return target;
}

namespace {

RouteResult lsh_top_k(RouteTag tag, std::span<const std::int64_t> scores,
                      std::span<const ItemId> history, std::size_t k) {
  RouteResult r = top_k_positive(tag, scores, history, k);
  for (auto& e : r.entries) e.origin = EntryOrigin::kLsh;
  return r;
}

MultiRouteResult lsh_only(std::span<const ItemId> history, const SignatureTable& sigs,
                          ItemId target, const RetrievalConfig& config) {
  MultiRouteResult out;
  const auto h = static_cast<std::int64_t>(sigs.bits());
  const std::size_t len = history.size();

  const IdRetrieval nearest = retrieve_target_id(sigs, history, target, config.k);
  for (std::uint32_t pos : nearest.positions) {
    out.target.entries.push_back(
        RouteEntry{pos, history[pos], nearest.distances[pos], EntryOrigin::kLsh});
  }

  const std::size_t window_begin = len > config.w ? len - config.w : 0;
  std::vector<std::int64_t> recent(len, 0);
  std::vector<std::int64_t> global(len, 0);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      if (i == j) continue;
      const std::int64_t sim = h - sigs.hamming(history[i], history[j]);
      global[i] += sim;
      if (j >= window_begin) recent[i] += sim;
    }
  }
  out.recent = lsh_top_k(RouteTag::kRecent, recent, history, config.k);
  out.global = lsh_top_k(RouteTag::kGlobal, global, history, config.k);
  return out;
}

}  // namespace

MultiRouteResult retrieve_all(std::span<const ItemId> history, const SidMap& sids,
                              const SignatureTable* signatures, ItemId target,
                              const RetrievalConfig& config) {
  config.validate();
  SIDFLOW_CHECK(sids.contains(target), ErrorKind::kInvalidArgument,
                "retrieve: unknown target item " + std::to_string(target));

  if (config.disable_sid_retrieval) {
    SIDFLOW_CHECK(signatures != nullptr, ErrorKind::kInvalidArgument,
                  "retrieve: LSH-only retrieval needs item signatures");
    return lsh_only(history, *signatures, target, config);
  }

  MultiRouteResult out;
  if (history.empty()) return out;

  const SidTrie trie(history, sids, config.score_mode);
  const RouteResult by_sid = retrieve_target_sid(trie, sids[target], config.k);
  out.recent = retrieve_recent(trie, config.w, config.k);
  out.global = retrieve_global(trie, config.k);

  if (signatures == nullptr || config.disable_id_fill) {
    out.target = by_sid;
    out.gate.tau = config.tau;
    return out;
  }
  const IdRetrieval by_id = retrieve_target_id(*signatures, history, target, config.n);
  out.gate = confidence_gate(by_id.distances, signatures->bits(), config.tau);
  out.target = merge_target(by_sid, by_id, history, out.gate);
  return out;
}

}  // namespace sidflow
