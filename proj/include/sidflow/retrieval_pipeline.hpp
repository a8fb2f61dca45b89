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

// Stage-1 orchestration: target (SID + gated LSH fill), recent and global
// routes for one (history, target) query.

#include <span>

#include "sidflow/lsh.hpp"
#include "sidflow/semantic_retrieval.hpp"

namespace sidflow {

struct RetrievalConfig {
  std::size_t k = 20;          // per-route length
  std::size_t w = 16;          // recent window
  std::size_t n = 2;           // LSH fill size
  std::size_t hash_bits = 32;  // H
  double tau = 0.7;
  // Every route ranks by SimHash similarity instead of SID prefixes.
  bool disable_sid_retrieval = false;
  // Forces the confidence gate closed.
  bool disable_id_fill = false;
  // kMatchCount drops the prefix constraint.
  ScoreMode score_mode = ScoreMode::kStrictPrefix;

  /// Longest route the model has to accept.
  std::size_t k_max() const { return k + n; }
  void validate() const;
};

struct MultiRouteResult {
  RouteResult target{RouteTag::kTarget, {}};
  RouteResult recent{RouteTag::kRecent, {}};
  RouteResult global{RouteTag::kGlobal, {}};
  GateDecision gate;

  const RouteResult& route(RouteTag tag) const;
};

/// `signatures` may be null when no collaborative embeddings exist yet; the
/// ID fill is then skipped (gate reported closed). With
/// disable_sid_retrieval the routes are built from signatures alone:
///   target: N = K nearest by Hamming distance (score = distance),
///   recent: sum over window items r != i of (H - hamming(i, r)),
///   global: sum over all j != i of (H - hamming(i, j)).
MultiRouteResult retrieve_all(std::span<const ItemId> history, const SidMap& sids,
                              const SignatureTable* signatures, ItemId target,
                              const RetrievalConfig& config);

}  // namespace sidflow
