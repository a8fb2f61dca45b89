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

#include "sidflow/lsh.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

namespace sidflow {

Hasher::Hasher(std::size_t bits, std::size_t dim, std::uint64_t seed)
    : bits_(bits), dim_(dim), seed_(seed), planes_(bits * dim) {
  SIDFLOW_CHECK(bits >= 1 && dim >= 1, ErrorKind::kInvalidArgument,
                "Hasher needs bits >= 1 and dim >= 1");
  Rng rng(seed);
  for (auto& v : planes_) v = rng.normal();
}

Signature simhash(std::span<const double> embedding, const Hasher& hasher) {
  SIDFLOW_CHECK(embedding.size() == hasher.dim(), ErrorKind::kInvalidArgument,
                "simhash: embedding dimension " + std::to_string(embedding.size()) +
                    " does not match hasher dimension " + std::to_string(hasher.dim()));
  Signature sig{hasher.bits(), std::vector<std::uint64_t>((hasher.bits() + 63) / 64, 0)};
  for (std::size_t k = 0; k < hasher.bits(); ++k) {
    const auto plane = hasher.plane(k);
    double dot = 0.0;
    for (std::size_t j = 0; j < embedding.size(); ++j) dot += embedding[j] * plane[j];
    if (dot >= 0.0) sig.words[k / 64] |= std::uint64_t{1} << (k % 64);
  }
  return sig;
}

int hamming(const Signature& a, const Signature& b) {
  SIDFLOW_CHECK(a.bits == b.bits, ErrorKind::kInvalidArgument,
                "hamming: signature lengths differ (" + std::to_string(a.bits) + " vs " +
                    std::to_string(b.bits) + ")");
  int d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

SignatureTable::SignatureTable(std::span<const double> table, std::size_t rows,
                               const Hasher& hasher)
    : rows_(rows), bits_(hasher.bits()), words_((hasher.bits() + 63) / 64),
      data_(rows * words_) {
  SIDFLOW_CHECK(table.size() == rows * hasher.dim(), ErrorKind::kInvalidArgument,
                "SignatureTable: table shape does not match hasher dimension");
  for (std::size_t r = 0; r < rows; ++r) {
    const auto sig = simhash(table.subspan(r * hasher.dim(), hasher.dim()), hasher);
    std::copy(sig.words.begin(), sig.words.end(), data_.begin() + r * words_);
  }
}

int SignatureTable::hamming(ItemId a, ItemId b) const {
  const auto* pa = data_.data() + std::size_t{a} * words_;
  const auto* pb = data_.data() + std::size_t{b} * words_;
  int d = 0;
  for (std::size_t w = 0; w < words_; ++w) d += std::popcount(pa[w] ^ pb[w]);
  return d;
}

Signature SignatureTable::signature(ItemId item) const {
  SIDFLOW_CHECK(item < rows_, ErrorKind::kInvalidArgument,
                "SignatureTable: unknown item " + std::to_string(item));
  const auto begin = data_.begin() + std::size_t{item} * words_;
  return Signature{bits_, std::vector<std::uint64_t>(begin, begin + words_)};
}

IdRetrieval rank_by_distance(std::vector<int> distances, std::size_t n) {
  SIDFLOW_CHECK(n >= 1, ErrorKind::kInvalidArgument, "LSH retrieval: N must be >= 1");
  IdRetrieval result;
  std::vector<std::uint32_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0U);
  const std::size_t take = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return distances[a] != distances[b] ? distances[a] < distances[b] : a > b;
                    });
  result.positions.assign(order.begin(), order.begin() + take);
  result.distances = std::move(distances);
  return result;
}

IdRetrieval retrieve_target_id(std::span<const Signature> history_sigs,
                               const Signature& target_sig, std::size_t n) {
  std::vector<int> distances;
  distances.reserve(history_sigs.size());
  for (const auto& s : history_sigs) distances.push_back(hamming(s, target_sig));
  return rank_by_distance(std::move(distances), n);
}

IdRetrieval retrieve_target_id(const SignatureTable& table, std::span<const ItemId> history,
                               ItemId target, std::size_t n) {
  SIDFLOW_CHECK(target < table.rows(), ErrorKind::kInvalidArgument,
                "LSH retrieval: unknown target item " + std::to_string(target));
  std::vector<int> distances;
  distances.reserve(history.size());
  for (ItemId item : history) distances.push_back(table.hamming(item, target));
  return rank_by_distance(std::move(distances), n);
}

GateDecision confidence_gate(std::span<const int> distances, std::size_t bits, double tau) {
  SIDFLOW_CHECK(bits >= 1, ErrorKind::kInvalidArgument, "confidence_gate: H must be >= 1");
  GateDecision gate;
  gate.tau = tau;
  if (distances.empty()) {
    gate.open = 0.0 >= tau;
    return gate;
  }
  const int d_min = *std::min_element(distances.begin(), distances.end());
  const double h = static_cast<double>(bits);
  const double n = static_cast<double>(distances.size());
  double mean = 0.0;
  for (int d : distances) mean += (d - d_min) / h;
  mean /= n;
  double var = 0.0;
  for (int d : distances) {
    const double x = (d - d_min) / h - mean;
    var += x * x;
  }
  gate.variance = var / n;
  gate.open = gate.variance >= tau;
  return gate;
}

RouteResult merge_target(const RouteResult& sid_result, const IdRetrieval& id_result,
                         std::span<const ItemId> history, const GateDecision& gate) {
  RouteResult merged = sid_result;
  merged.tag = RouteTag::kTarget;
  if (!gate.open) return merged;
  for (std::uint32_t pos : id_result.positions) {
    const bool present = std::any_of(merged.entries.begin(), merged.entries.end(),
                                     [&](const RouteEntry& e) { return e.position == pos; });
    if (present) continue;
    merged.entries.push_back(
        RouteEntry{pos, history[pos], id_result.distances[pos], EntryOrigin::kLsh});
  }
  return merged;
}

}  // namespace sidflow
