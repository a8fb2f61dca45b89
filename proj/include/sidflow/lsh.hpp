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

// SimHash signatures over collaborative item embeddings, Hamming top-N
// retrieval, the variance confidence gate, and gated filling of the target
// route.

#include <cstdint>
#include <span>
#include <vector>

#include "sidflow/semantic_retrieval.hpp"

namespace sidflow {

struct Signature {
  std::size_t bits = 0;
  std::vector<std::uint64_t> words;

  bool bit(std::size_t k) const { return (words[k / 64] >> (k % 64)) & 1U; }

  friend bool operator==(const Signature&, const Signature&) = default;
};

/// Random-hyperplane hasher: bit k is set iff dot(v, plane_k) >= 0.
class Hasher {
 public:
  Hasher(std::size_t bits, std::size_t dim, std::uint64_t seed);

  std::size_t bits() const { return bits_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> plane(std::size_t k) const {
    return {planes_.data() + k * dim_, dim_};
  }

 private:
  std::size_t bits_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::vector<double> planes_;  // bits x dim, standard normal entries
};

Signature simhash(std::span<const double> embedding, const Hasher& hasher);

int hamming(const Signature& a, const Signature& b);

/// Signatures of every row of an embedding table, stored flat. Row 0 (the
/// padding item) is hashed like any other row.
class SignatureTable {
 public:
  SignatureTable() = default;
  SignatureTable(std::span<const double> table, std::size_t rows, const Hasher& hasher);

  std::size_t rows() const { return rows_; }
  std::size_t bits() const { return bits_; }
  int hamming(ItemId a, ItemId b) const;
  Signature signature(ItemId item) const;

 private:
  std::size_t rows_ = 0;
  std::size_t bits_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> data_;
};

struct IdRetrieval {
  std::vector<std::uint32_t> positions;  // top-N, nearest first
  std::vector<int> distances;            // one per history position
};

/// N smallest distances; equal distances go to the more recent position.
IdRetrieval rank_by_distance(std::vector<int> distances, std::size_t n);

IdRetrieval retrieve_target_id(std::span<const Signature> history_sigs,
                               const Signature& target_sig, std::size_t n);
IdRetrieval retrieve_target_id(const SignatureTable& table, std::span<const ItemId> history,
                               ItemId target, std::size_t n);

struct GateDecision {
  double variance = 0.0;
  bool open = false;
  double tau = 0.0;
};

/// Population variance of (d_i - d_min) / bits over every distance; the gate
/// opens when the variance reaches tau.
GateDecision confidence_gate(std::span<const int> distances, std::size_t bits, double tau);

/// Appends the LSH positions that the SID result does not already hold, only
/// when the gate is open. Appended entries carry origin kLsh and their Hamming
/// distance as score.
RouteResult merge_target(const RouteResult& sid_result, const IdRetrieval& id_result,
                         std::span<const ItemId> history, const GateDecision& gate);

}  // namespace sidflow
