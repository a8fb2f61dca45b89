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

// SID-based retrieval routes over one user's history: strict prefix score
// against the target, aggregated prefix score against the recent window,
// and prefix frequency over the whole history.

#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sidflow/tokenizer.hpp"

namespace sidflow {

enum class RouteTag : std::uint8_t { kTarget, kRecent, kGlobal };

std::string_view route_name(RouteTag tag);

/// How two semantic ids are compared. kStrictPrefix is the longest common
/// prefix length; kMatchCount counts equal codes level by level with no
/// prefix constraint.
enum class ScoreMode : std::uint8_t { kStrictPrefix, kMatchCount };

/// Where a retrieved entry came from. Only target routes mix both.
enum class EntryOrigin : std::uint8_t { kSid, kLsh };

struct RouteEntry {
  std::uint32_t position = 0;  // 0-based index into the history
  ItemId item = 0;
  std::int64_t score = 0;
  EntryOrigin origin = EntryOrigin::kSid;

  friend bool operator==(const RouteEntry&, const RouteEntry&) = default;
};

struct RouteResult {
  RouteTag tag = RouteTag::kTarget;
  std::vector<RouteEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  friend bool operator==(const RouteResult&, const RouteResult&) = default;
};

/// Longest common prefix length (kStrictPrefix) or number of equal levels
/// (kMatchCount).
int prefix_score(const SemanticId& a, const SemanticId& b,
                 ScoreMode mode = ScoreMode::kStrictPrefix);

/// Per-user retrieval index: the history's SIDs aligned with positions plus
/// multiset counts of every length-j prefix (or of every (level, code) pair
/// in kMatchCount mode).
class SidTrie {
 public:
  SidTrie(std::span<const ItemId> history, const SidMap& sids,
          ScoreMode mode = ScoreMode::kStrictPrefix);
  SidTrie(std::vector<SemanticId> history_sids, std::vector<ItemId> items,
          ScoreMode mode = ScoreMode::kStrictPrefix);

  std::size_t size() const { return sids_.size(); }
  bool empty() const { return sids_.empty(); }
  std::size_t n_levels() const { return n_levels_; }
  ScoreMode mode() const { return mode_; }
  const SemanticId& sid(std::size_t position) const { return sids_[position]; }
  ItemId item(std::size_t position) const { return items_[position]; }
  std::span<const ItemId> items() const { return items_; }

  /// How many history positions share `sid`'s key at `level` (0-based, so
  /// level 0 is the length-1 prefix).
  std::uint32_t count(const SemanticId& sid, std::size_t level) const;

  /// Key of `sid` at `level`: the packed length-(level+1) prefix, or the
  /// (level, code) pair in kMatchCount mode.
  std::uint64_t key(const SemanticId& sid, std::size_t level) const;

 private:
  void build_counts();

  std::size_t n_levels_ = 0;
  ScoreMode mode_;
  std::vector<SemanticId> sids_;
  std::vector<ItemId> items_;
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> counts_;
};

/// Top-k of positions with score > 0, ordered by score descending and then
/// position descending (most recent first).
RouteResult top_k_positive(RouteTag tag, std::span<const std::int64_t> scores,
                           std::span<const ItemId> items, std::size_t k);

RouteResult retrieve_target_sid(const SidTrie& trie, const SemanticId& target, std::size_t k);

/// Each history item is scored against the last min(w, len) positions,
/// skipping the pair with itself.
RouteResult retrieve_recent(const SidTrie& trie, std::size_t w, std::size_t k);

/// Sum over levels of (count of items sharing the prefix - 1).
RouteResult retrieve_global(const SidTrie& trie, std::size_t k);

}  // namespace sidflow
