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

#include "sidflow/semantic_retrieval.hpp"

#include <algorithm>
#include <string>

namespace sidflow {

std::string_view route_name(RouteTag tag) {
  switch (tag) {
    case RouteTag::kTarget: return "target";
    case RouteTag::kRecent: return "recent";
    case RouteTag::kGlobal: return "global";
  }
  return "unknown";
}

int prefix_score(const SemanticId& a, const SemanticId& b, ScoreMode mode) {
  const std::size_t n = std::min(a.size(), b.size());
  int score = 0;
  for (std::size_t l = 0; l < n; ++l) {
    if (a[l] == b[l]) {
      ++score;
    } else if (mode == ScoreMode::kStrictPrefix) {
      break;
    }
  }
  return score;
}

SidTrie::SidTrie(std::span<const ItemId> history, const SidMap& sids, ScoreMode mode)
    : n_levels_(sids.n_levels()), mode_(mode) {
  sids_.reserve(history.size());
  items_.assign(history.begin(), history.end());
  for (ItemId item : history) sids_.push_back(sids.at(item));
  build_counts();
}

SidTrie::SidTrie(std::vector<SemanticId> history_sids, std::vector<ItemId> items,
                 ScoreMode mode)
    : mode_(mode), sids_(std::move(history_sids)), items_(std::move(items)) {
  SIDFLOW_CHECK(sids_.size() == items_.size(), ErrorKind::kInvalidArgument,
                "SidTrie: sids and items differ in length");
  n_levels_ = sids_.empty() ? 0 : sids_.front().size();
  for (const auto& s : sids_) {
    SIDFLOW_CHECK(s.size() == n_levels_, ErrorKind::kInvalidArgument,
                  "SidTrie: mixed semantic id lengths");
  }
  build_counts();
}

std::uint64_t SidTrie::key(const SemanticId& sid, std::size_t level) const {
  if (mode_ == ScoreMode::kMatchCount) return sid[level];
  std::uint64_t k = 0;
  for (std::size_t l = 0; l <= level; ++l) k |= std::uint64_t{sid[l]} << (16 * l);
  return k;
}

void SidTrie::build_counts() {
  counts_.assign(n_levels_, {});
  for (auto& table : counts_) table.reserve(sids_.size());
  for (const auto& s : sids_) {
    for (std::size_t l = 0; l < n_levels_; ++l) ++counts_[l][key(s, l)];
  }
}

std::uint32_t SidTrie::count(const SemanticId& sid, std::size_t level) const {
  const auto& table = counts_[level];
  const auto it = table.find(key(sid, level));
  return it == table.end() ? 0 : it->second;
}

RouteResult top_k_positive(RouteTag tag, std::span<const std::int64_t> scores,
                           std::span<const ItemId> items, std::size_t k) {
  RouteResult result{tag, {}};
  std::vector<std::uint32_t> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > 0) candidates.push_back(static_cast<std::uint32_t>(i));
  }
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a > b;
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(), better);
  result.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto pos = candidates[i];
    result.entries.push_back(RouteEntry{pos, items[pos], scores[pos], EntryOrigin::kSid});
  }
  return result;
}

RouteResult retrieve_target_sid(const SidTrie& trie, const SemanticId& target, std::size_t k) {
  SIDFLOW_CHECK(k >= 1, ErrorKind::kInvalidArgument, "retrieve_target_sid: K must be >= 1");
  std::vector<std::int64_t> scores(trie.size());
  for (std::size_t i = 0; i < trie.size(); ++i) {
    scores[i] = prefix_score(trie.sid(i), target, trie.mode());
  }
  return top_k_positive(RouteTag::kTarget, scores, trie.items(), k);
}

RouteResult retrieve_recent(const SidTrie& trie, std::size_t w, std::size_t k) {
  SIDFLOW_CHECK(w >= 1 && k >= 1, ErrorKind::kInvalidArgument,
                "retrieve_recent: W and K must be >= 1");
  const std::size_t len = trie.size();
  const std::size_t window_begin = len > w ? len - w : 0;
  const std::size_t levels = trie.n_levels();

  // Sum over window items r of score(i, r) equals, level by level, the number
  // of window items sharing i's key at that level.
  std::vector<std::uint64_t> window_keys;
  window_keys.reserve((len - window_begin) * levels);
  for (std::size_t l = 0; l < levels; ++l) {
    for (std::size_t r = window_begin; r < len; ++r) window_keys.push_back(trie.key(trie.sid(r), l));
  }
  const std::size_t window = len - window_begin;

  std::vector<std::int64_t> scores(len, 0);
  for (std::size_t i = 0; i < len; ++i) {
    std::int64_t s = 0;
    for (std::size_t l = 0; l < levels; ++l) {
      const std::uint64_t ki = trie.key(trie.sid(i), l);
      const auto* keys = window_keys.data() + l * window;
      for (std::size_t r = 0; r < window; ++r) s += keys[r] == ki;
    }
    if (i >= window_begin) s -= static_cast<std::int64_t>(levels);  // self pair
    scores[i] = s;
  }
  return top_k_positive(RouteTag::kRecent, scores, trie.items(), k);
}

RouteResult retrieve_global(const SidTrie& trie, std::size_t k) {
  SIDFLOW_CHECK(k >= 1, ErrorKind::kInvalidArgument, "retrieve_global: K must be >= 1");
  std::vector<std::int64_t> scores(trie.size(), 0);
  for (std::size_t i = 0; i < trie.size(); ++i) {
    std::int64_t s = 0;
    for (std::size_t l = 0; l < trie.n_levels(); ++l) {
      s += static_cast<std::int64_t>(trie.count(trie.sid(i), l)) - 1;
    }
    scores[i] = s;
  }
  return top_k_positive(RouteTag::kGlobal, scores, trie.items(), k);
}

}  // namespace sidflow
