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

#include <gtest/gtest.h>

#include <vector>

#include "oracles.hpp"
#include "sidflow/common.hpp"

namespace sidflow {
namespace {

SidTrie make_trie(const std::vector<SemanticId>& sids, ScoreMode mode = ScoreMode::kStrictPrefix) {
  std::vector<ItemId> items;
  for (std::size_t i = 0; i < sids.size(); ++i) items.push_back(static_cast<ItemId>(i + 1));
  return SidTrie(sids, items, mode);
}

std::vector<std::uint32_t> positions(const RouteResult& r) {
  std::vector<std::uint32_t> out;
  for (const auto& e : r.entries) out.push_back(e.position);
  return out;
}

std::vector<std::int64_t> scores(const RouteResult& r) {
  std::vector<std::int64_t> out;
  for (const auto& e : r.entries) out.push_back(e.score);
  return out;
}

void expect_matches(const RouteResult& got,
                    const std::vector<std::pair<std::uint32_t, std::int64_t>>& want) {
  ASSERT_EQ(got.entries.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got.entries[i].position, want[i].first) << "rank " << i;
    EXPECT_EQ(got.entries[i].score, want[i].second) << "rank " << i;
  }
}

TEST(PrefixScore, TruthTable) {
  EXPECT_EQ(prefix_score(make_sid({5, 7, 2}), make_sid({5, 7, 2})), 3);
  EXPECT_EQ(prefix_score(make_sid({5, 7, 2}), make_sid({5, 7, 9})), 2);
  EXPECT_EQ(prefix_score(make_sid({5, 1, 2}), make_sid({5, 7, 2})), 1);
  EXPECT_EQ(prefix_score(make_sid({9, 7, 2}), make_sid({5, 7, 2})), 0);
}

TEST(PrefixScore, MatchCountIgnoresPrefixOrder) {
  EXPECT_EQ(prefix_score(make_sid({9, 7, 2}), make_sid({5, 7, 2}), ScoreMode::kMatchCount), 2);
  EXPECT_EQ(prefix_score(make_sid({5, 1, 2}), make_sid({5, 7, 2}), ScoreMode::kMatchCount), 2);
}

TEST(TargetRoute, RecencyBreaksTies) {
  const auto trie = make_trie({make_sid({1, 1, 1}), make_sid({1, 1, 2}), make_sid({2, 2, 2}),
                               make_sid({1, 1, 1})});
  const auto r = retrieve_target_sid(trie, make_sid({1, 1, 1}), 2);
  EXPECT_EQ(positions(r), (std::vector<std::uint32_t>{3, 0}));
  EXPECT_EQ(scores(r), (std::vector<std::int64_t>{3, 3}));
  EXPECT_EQ(r.entries[0].item, 4u);
  EXPECT_EQ(r.tag, RouteTag::kTarget);
}

TEST(TargetRoute, NoSharedFirstCodeGivesEmpty) {
  const auto trie = make_trie({make_sid({1, 1, 1}), make_sid({2, 2, 2})});
  EXPECT_TRUE(retrieve_target_sid(trie, make_sid({3, 1, 1}), 5).empty());
}

TEST(TargetRoute, LargeKReturnsAllPositiveSorted) {
  const auto trie = make_trie({make_sid({1, 2, 3}), make_sid({1, 1, 1}), make_sid({4, 4, 4}),
                               make_sid({1, 2, 4})});
  const auto r = retrieve_target_sid(trie, make_sid({1, 2, 3}), 100);
  EXPECT_EQ(positions(r), (std::vector<std::uint32_t>{0, 3, 1}));
  EXPECT_EQ(scores(r), (std::vector<std::int64_t>{3, 2, 1}));
}

TEST(TargetRoute, ZeroKRejected) {
  const auto trie = make_trie({make_sid({1, 1, 1})});
  EXPECT_THROW(retrieve_target_sid(trie, make_sid({1, 1, 1}), 0), Error);
}

TEST(RecentRoute, WindowExample) {
  const auto trie = make_trie({make_sid({1, 1, 1}), make_sid({1, 1, 2}), make_sid({2, 2, 2})});
  const auto r = retrieve_recent(trie, 2, 1);
  EXPECT_EQ(positions(r), (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(scores(r), (std::vector<std::int64_t>{2}));
}

TEST(RecentRoute, SingleItemIsEmpty) {
  const auto trie = make_trie({make_sid({1, 1, 1})});
  EXPECT_TRUE(retrieve_recent(trie, 16, 5).empty());
}

TEST(RecentRoute, IdenticalSidsMatchExhaustiveLoop) {
  std::vector<SemanticId> sids(5, make_sid({3, 3, 3}));
  const auto trie = make_trie(sids);
  const auto r = retrieve_recent(trie, 2, 5);
  expect_matches(r, oracle::recent_route(sids, 2, 5));
  // Outside the window: 2 partners x 3; inside: 1 partner x 3.
  EXPECT_EQ(scores(r), (std::vector<std::int64_t>{6, 6, 6, 3, 3}));
}

TEST(GlobalRoute, MultisetCounts) {
  const auto trie = make_trie({make_sid({1, 1, 1}), make_sid({1, 1, 2}), make_sid({2, 0, 0})});
  const auto r = retrieve_global(trie, 5);
  EXPECT_EQ(positions(r), (std::vector<std::uint32_t>{1, 0}));
  EXPECT_EQ(scores(r), (std::vector<std::int64_t>{2, 2}));
}

TEST(GlobalRoute, DistinctFirstCodesGiveEmpty) {
  const auto trie = make_trie({make_sid({1, 1, 1}), make_sid({2, 1, 1}), make_sid({3, 1, 1})});
  EXPECT_TRUE(retrieve_global(trie, 5).empty());
}

TEST(GlobalRoute, CopiesScoreClosedForm) {
  for (std::size_t n : {2u, 3u, 7u}) {
    std::vector<SemanticId> sids(n, make_sid({4, 5, 6}));
    const auto r = retrieve_global(make_trie(sids), n);
    ASSERT_EQ(r.size(), n);
    for (const auto& e : r.entries) EXPECT_EQ(e.score, static_cast<std::int64_t>(3 * (n - 1)));
  }
}

TEST(SidTrie, CountsPrefixes) {
  const auto trie = make_trie({make_sid({1, 1, 1}), make_sid({1, 1, 2}), make_sid({1, 2, 2})});
  EXPECT_EQ(trie.count(make_sid({1, 1, 9}), 0), 3u);
  EXPECT_EQ(trie.count(make_sid({1, 1, 9}), 1), 2u);
  EXPECT_EQ(trie.count(make_sid({1, 1, 9}), 2), 0u);
  EXPECT_EQ(trie.count(make_sid({2, 1, 1}), 1), 0u);
}

TEST(SidTrie, RejectsMixedLengths) {
  EXPECT_THROW(SidTrie({make_sid({1, 1, 1}), make_sid({1, 1})}, {1, 2}), Error);
  EXPECT_THROW(SidTrie({make_sid({1, 1, 1})}, {1, 2}), Error);
}

class RandomHistories : public ::testing::TestWithParam<ScoreMode> {};

TEST_P(RandomHistories, AllRoutesMatchBruteForce) {
  Rng rng(derive_seed(11, "histories"));
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t len = 1 + rng.below(300);
    const std::size_t codes = 1 + rng.below(16);
    std::vector<SemanticId> sids;
    for (std::size_t i = 0; i < len; ++i) {
      sids.push_back(make_sid({static_cast<std::uint16_t>(rng.below(codes)),
                               static_cast<std::uint16_t>(rng.below(codes)),
                               static_cast<std::uint16_t>(rng.below(codes))}));
    }
    const SemanticId target = make_sid({static_cast<std::uint16_t>(rng.below(codes)),
                                        static_cast<std::uint16_t>(rng.below(codes)),
                                        static_cast<std::uint16_t>(rng.below(codes))});
    const std::size_t k = 1 + rng.below(30);
    const std::size_t w = 1 + rng.below(40);
    const auto trie = make_trie(sids, GetParam());
    expect_matches(retrieve_target_sid(trie, target, k),
                   oracle::target_route(sids, target, k, GetParam()));
    expect_matches(retrieve_recent(trie, w, k), oracle::recent_route(sids, w, k, GetParam()));
    expect_matches(retrieve_global(trie, k), oracle::global_route(sids, k, GetParam()));
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, RandomHistories,
                         ::testing::Values(ScoreMode::kStrictPrefix, ScoreMode::kMatchCount));

TEST(Routes, OutputInvariants) {
  Rng rng(5);
  std::vector<SemanticId> sids;
  for (int i = 0; i < 200; ++i) {
    sids.push_back(make_sid({static_cast<std::uint16_t>(rng.below(4)),
                             static_cast<std::uint16_t>(rng.below(4)),
                             static_cast<std::uint16_t>(rng.below(4))}));
  }
  const auto trie = make_trie(sids);
  for (const auto& r : {retrieve_target_sid(trie, sids[17], 20), retrieve_recent(trie, 16, 20),
                        retrieve_global(trie, 20)}) {
    EXPECT_LE(r.size(), 20u);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_GT(r.entries[i].score, 0);
      if (i > 0) {
        EXPECT_GE(r.entries[i - 1].score, r.entries[i].score);
      }
      for (std::size_t j = 0; j < i; ++j) EXPECT_NE(r.entries[i].position, r.entries[j].position);
    }
  }
}

}  // namespace
}  // namespace sidflow
