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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "sidflow/common.hpp"

namespace sidflow {
namespace {

Signature from_bits(const std::vector<int>& bits) {
  Signature s{bits.size(), std::vector<std::uint64_t>((bits.size() + 63) / 64, 0)};
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k]) s.words[k / 64] |= std::uint64_t{1} << (k % 64);
  }
  return s;
}

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

TEST(SimHash, SameVectorSameSignature) {
  const Hasher hasher(64, 8, 3);
  Rng rng(1);
  const auto v = random_vector(rng, 8);
  EXPECT_EQ(hamming(simhash(v, hasher), simhash(v, hasher)), 0);
}

TEST(SimHash, NegationFlipsEveryBit) {
  const Hasher hasher(100, 6, 4);
  Rng rng(2);
  auto v = random_vector(rng, 6);
  auto neg = v;
  for (auto& x : neg) x = -x;
  EXPECT_EQ(hamming(simhash(v, hasher), simhash(neg, hasher)), 100);
}

TEST(SimHash, BitsMatchSignScan) {
  const Hasher hasher(8, 5, 9);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = random_vector(rng, 5);
    const Signature s = simhash(v, hasher);
    for (std::size_t k = 0; k < 8; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 5; ++j) dot += v[j] * hasher.plane(k)[j];
      EXPECT_EQ(s.bit(k), dot >= 0.0) << "bit " << k;
    }
  }
}

TEST(SimHash, DimensionMismatchRejected) {
  const Hasher hasher(8, 5, 9);
  EXPECT_THROW(simhash(std::vector<double>(4, 1.0), hasher), Error);
}

TEST(SimHash, AngularLocality) {
  const std::size_t dim = 16;
  const Hasher hasher(256, dim, derive_seed(7, "hasher"));
  Rng rng(44);
  double total = 0.0;
  const int pairs = 1000;
  for (int i = 0; i < pairs; ++i) {
    auto a = random_vector(rng, dim);
    auto b = random_vector(rng, dim);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    const double theta = std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
    const double h = hamming(simhash(a, hasher), simhash(b, hasher)) / 256.0;
    total += std::abs(h - theta / std::numbers::pi);
  }
  EXPECT_LT(total / pairs, 0.05);
}

TEST(Hamming, Examples) {
  EXPECT_EQ(hamming(from_bits({1, 0, 1, 0}), from_bits({1, 0, 1, 0})), 0);
  EXPECT_EQ(hamming(from_bits({1, 0, 1, 0}), from_bits({0, 1, 1, 0})), 2);
  std::vector<int> a = {1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 0};
  std::vector<int> c(a.size());
  std::transform(a.begin(), a.end(), c.begin(), [](int b) { return 1 - b; });
  EXPECT_EQ(hamming(from_bits(a), from_bits(c)), 16);
}

TEST(Hamming, LengthMismatchRejected) {
  EXPECT_THROW(hamming(from_bits({1, 0}), from_bits({1, 0, 1})), Error);
}

TEST(TargetId, IdenticalItemRanksFirst) {
  std::vector<Signature> history = {from_bits({1, 1, 0, 0}), from_bits({0, 0, 1, 1}),
                                    from_bits({1, 0, 1, 0})};
  const auto r = retrieve_target_id(history, from_bits({0, 0, 1, 1}), 1);
  ASSERT_EQ(r.positions.size(), 1u);
  EXPECT_EQ(r.positions[0], 1u);
  EXPECT_EQ(r.distances[1], 0);
  EXPECT_EQ(r.distances.size(), 3u);
}

TEST(TargetId, LargeNReturnsAllSorted) {
  std::vector<Signature> history = {from_bits({1, 1, 1, 1}), from_bits({0, 0, 0, 1}),
                                    from_bits({0, 0, 1, 1}), from_bits({0, 0, 0, 1})};
  const auto r = retrieve_target_id(history, from_bits({0, 0, 0, 0}), 10);
  // distances 4,1,2,1: ties go to the more recent position
  EXPECT_EQ(r.positions, (std::vector<std::uint32_t>{3, 1, 2, 0}));
}

TEST(TargetId, MatchesFullSort) {
  Rng rng(8);
  const Hasher hasher(32, 4, 1);
  std::vector<Signature> history;
  for (int i = 0; i < 300; ++i) history.push_back(simhash(random_vector(rng, 4), hasher));
  const Signature target = simhash(random_vector(rng, 4), hasher);
  const auto r = retrieve_target_id(history, target, 2);

  std::vector<std::uint32_t> order(300);
  std::iota(order.begin(), order.end(), 0U);
  std::vector<int> d;
  for (const auto& h : history) d.push_back(hamming(h, target));
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return d[a] != d[b] ? d[a] < d[b] : a > b;
  });
  EXPECT_EQ(r.positions, (std::vector<std::uint32_t>{order[0], order[1]}));
  EXPECT_EQ(r.distances, d);
}

TEST(SignatureTable, AgreesWithSimHash) {
  Rng rng(12);
  const Hasher hasher(70, 3, 5);
  std::vector<double> table(10 * 3);
  for (auto& x : table) x = rng.normal();
  const SignatureTable sigs(table, 10, hasher);
  for (ItemId a = 0; a < 10; ++a) {
    const auto sa = simhash(std::span<const double>(table).subspan(a * 3, 3), hasher);
    EXPECT_EQ(sigs.signature(a), sa);
    for (ItemId b = 0; b < 10; ++b) {
      const auto sb = simhash(std::span<const double>(table).subspan(b * 3, 3), hasher);
      EXPECT_EQ(sigs.hamming(a, b), hamming(sa, sb));
    }
  }
}

TEST(ConfidenceGate, HandVariance) {
  const std::vector<int> d = {0, 8, 8, 8};
  const auto loose = confidence_gate(d, 8, 0.1);
  EXPECT_NEAR(loose.variance, 0.1875, 1e-12);
  EXPECT_TRUE(loose.open);
  EXPECT_FALSE(confidence_gate(d, 8, 0.5).open);
}

TEST(ConfidenceGate, EqualDistancesStayClosed) {
  const std::vector<int> d = {5, 5, 5, 5, 5};
  for (double tau : {1e-9, 0.1, 0.7}) {
    const auto g = confidence_gate(d, 32, tau);
    EXPECT_EQ(g.variance, 0.0);
    EXPECT_FALSE(g.open);
  }
}

TEST(ConfidenceGate, ShiftInvariant) {
  const std::vector<int> a = {0, 3, 7, 2};
  const std::vector<int> b = {10, 13, 17, 12};
  EXPECT_DOUBLE_EQ(confidence_gate(a, 32, 0.1).variance, confidence_gate(b, 32, 0.1).variance);
}

TEST(ConfidenceGate, MonotoneInTau) {
  Rng rng(77);
  for (int list = 0; list < 100; ++list) {
    std::vector<int> d(1 + rng.below(40));
    for (auto& x : d) x = static_cast<int>(rng.below(33));
    bool prev = true;
    for (int step = 0; step <= 100; ++step) {
      const bool open = confidence_gate(d, 32, step / 100.0).open;
      EXPECT_LE(open, prev);
      prev = open;
    }
  }
}

TEST(ConfidenceGate, VarianceNeverExceedsQuarter) {
  Rng rng(78);
  for (int list = 0; list < 200; ++list) {
    std::vector<int> d(2 + rng.below(60));
    for (auto& x : d) x = rng.bernoulli(0.5) ? 0 : 16;
    EXPECT_LE(confidence_gate(d, 16, 0.0).variance, 0.25 + 1e-15);
  }
}

TEST(MergeTarget, ClosedGateKeepsSidResult) {
  const std::vector<ItemId> history = {11, 12, 13};
  RouteResult sid{RouteTag::kTarget, {RouteEntry{2, 13, 3, EntryOrigin::kSid}}};
  IdRetrieval id{{0, 1}, {1, 2, 9}};
  GateDecision closed;
  EXPECT_EQ(merge_target(sid, id, history, closed), sid);
}

TEST(MergeTarget, OpenGateAppendsWithoutDuplicates) {
  const std::vector<ItemId> history = {11, 12, 13};
  RouteResult sid{RouteTag::kTarget, {RouteEntry{2, 13, 3, EntryOrigin::kSid}}};
  IdRetrieval id{{2, 0}, {1, 5, 0}};
  GateDecision open{0.2, true, 0.1};
  const auto merged = merge_target(sid, id, history, open);
  ASSERT_EQ(merged.size(), 2u);
  EXPECT_EQ(merged.entries[0], sid.entries[0]);
  EXPECT_EQ(merged.entries[1], (RouteEntry{0, 11, 1, EntryOrigin::kLsh}));
}

}  // namespace
}  // namespace sidflow
