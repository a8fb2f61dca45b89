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

#include "sidflow/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "sidflow/common.hpp"

namespace sidflow {
namespace {

constexpr std::size_t kDim = 4;

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 0.5) {
  Tensor t(r, c);
  for (auto& x : t.data) x = rng.normal(0.0, scale);
  return t;
}

LevelParams random_level(Rng& rng, std::size_t d = kDim) {
  return {random_tensor(d, d, rng), random_tensor(d, d, rng), random_tensor(d, d, rng),
          random_tensor(3, 3 * d, rng), random_tensor(1, 3, rng)};
}

LevelParams zero_level(std::size_t d = kDim) {
  return {Tensor(d, d), Tensor(d, d), Tensor(d, d), Tensor(3, 3 * d), Tensor(1, 3)};
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Tensor identity(std::size_t d) {
  Tensor t(d, d);
  for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1.0;
  return t;
}

ModelConfig tiny_config(PoolingMode pooling = PoolingMode::kCrossAttention,
                        FeatureMode features = FeatureMode::kFull) {
  ModelConfig c;
  c.n_users = 3;
  c.n_items = 8;
  c.n_sid_levels = 3;
  c.codebook_size = 4;
  c.d_model = kDim;
  c.k_max = 3;
  c.hidden = {5};
  c.pooling = pooling;
  c.features = features;
  return c;
}

SidMap tiny_sids(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SemanticId> by_item(9);
  for (std::size_t i = 1; i <= 8; ++i) {
    by_item[i] = make_sid({static_cast<std::uint16_t>(rng.below(4)),
                           static_cast<std::uint16_t>(rng.below(4)),
                           static_cast<std::uint16_t>(rng.below(4))});
  }
  return SidMap(3, std::move(by_item));
}

ModelInput tiny_input() {
  ModelInput in;
  in.user = 2;
  in.target = 5;
  in.routes = {std::vector<ItemId>{1, 3}, std::vector<ItemId>{2, 4, 6}, std::vector<ItemId>{}};
  return in;
}

// Loss g . pool_route(...) for finite differences.
double probe(const std::vector<double>& g, const std::vector<double>& target,
             const std::vector<double>& tokens, const std::vector<std::uint8_t>& mask,
             const LevelParams& p, PoolingMode mode) {
  const auto out = pool_route(target, tokens, mask, p, mode);
  return std::inner_product(out.begin(), out.end(), g.begin(), 0.0);
}

TEST(Pooling, CrossAttentionMatchesScalarOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_level(rng);
    const auto target = random_vec(kDim, rng);
    const std::size_t n = 1 + rng.below(6);
    const auto tokens = random_vec(n * kDim, rng);
    std::vector<std::uint8_t> mask(n);
    std::vector<bool> bmask(n);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = rng.bernoulli(0.7);
      bmask[i] = mask[i];
      rows.emplace_back(tokens.begin() + i * kDim, tokens.begin() + (i + 1) * kDim);
    }
    const auto got = pool_route(target, tokens, mask, p, PoolingMode::kCrossAttention);
    const auto want = oracle::cross_attention(target, rows, bmask, p);
    for (std::size_t j = 0; j < kDim; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
  }
}

TEST(Pooling, SingleTokenPassesValueThrough) {
  LevelParams p = zero_level();
  p.w_v = identity(kDim);
  const std::vector<double> target = {1, 2, 3, 4};
  const std::vector<double> token = {0.5, -1, 0, 2};
  const std::vector<std::uint8_t> mask = {1};
  for (auto mode : {PoolingMode::kCrossAttention, PoolingMode::kAverage,
                    PoolingMode::kSelfAttention}) {
    const auto out = pool_route(target, token, mask, p, mode);
    for (std::size_t j = 0; j < kDim; ++j) EXPECT_DOUBLE_EQ(out[j], target[j] + token[j]);
  }
}

TEST(Pooling, AllMaskedReturnsTarget) {
  Rng rng(2);
  const auto p = random_level(rng);
  const auto target = random_vec(kDim, rng);
  const auto tokens = random_vec(3 * kDim, rng);
  const std::vector<std::uint8_t> mask(3, 0);
  for (auto mode : {PoolingMode::kCrossAttention, PoolingMode::kAverage,
                    PoolingMode::kSelfAttention}) {
    EXPECT_EQ(pool_route(target, tokens, mask, p, mode), target);
  }
}

TEST(Pooling, AverageIsMaskedMean) {
  LevelParams p = zero_level();
  p.w_v = identity(kDim);
  const std::vector<double> target(kDim, 0.0);
  const std::vector<double> tokens = {1, 1, 1, 1, 100, 100, 100, 100, 3, 3, 3, 3};
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  const auto out = pool_route(target, tokens, mask, p, PoolingMode::kAverage);
  for (double x : out) EXPECT_DOUBLE_EQ(x, 2.0);
}

class PoolingGradient : public ::testing::TestWithParam<PoolingMode> {};

TEST_P(PoolingGradient, MatchesFiniteDifferences) {
  Rng rng(3);
  const double eps = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_level(rng);
    auto target = random_vec(kDim, rng);
    auto tokens = random_vec(4 * kDim, rng);
    const std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    const auto g = random_vec(kDim, rng);

    PoolCache cache;
    pool_route(target, tokens, mask, p, GetParam(), &cache);
    LevelParams grads = zero_level();
    std::vector<double> g_target(kDim, 0.0), g_tokens(4 * kDim, 0.0);
    pool_route_backward(cache, g, p, grads, g_target, g_tokens);

    auto central = [&](double& slot) {
      const double saved = slot;
      slot = saved + eps;
      const double up = probe(g, target, tokens, mask, p, GetParam());
      slot = saved - eps;
      const double down = probe(g, target, tokens, mask, p, GetParam());
      slot = saved;
      return (up - down) / (2 * eps);
    };
    for (std::size_t j = 0; j < kDim; ++j) EXPECT_NEAR(g_target[j], central(target[j]), 1e-7);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      EXPECT_NEAR(g_tokens[j], central(tokens[j]), 1e-7) << "token element " << j;
    }
    for (std::size_t j = kDim; j < 2 * kDim; ++j) EXPECT_EQ(g_tokens[j], 0.0);
    for (std::size_t j = 0; j < kDim * kDim; ++j) {
      EXPECT_NEAR(grads.w_q.data[j], central(p.w_q.data[j]), 1e-7);
      EXPECT_NEAR(grads.w_k.data[j], central(p.w_k.data[j]), 1e-7);
      EXPECT_NEAR(grads.w_v.data[j], central(p.w_v.data[j]), 1e-7);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, PoolingGradient,
                         ::testing::Values(PoolingMode::kCrossAttention, PoolingMode::kAverage,
                                           PoolingMode::kSelfAttention));

TEST(GatedFusion, MatchesScalarOracle) {
  Rng rng(4);
  for (std::size_t m : {1u, 3u, 4u}) {
    const auto w = random_tensor(m, m * kDim, rng);
    const auto b = random_tensor(1, m, rng);
    const auto z = random_vec(m * kDim, rng);
    std::vector<std::vector<double>> inputs;
    for (std::size_t k = 0; k < m; ++k) inputs.emplace_back(z.begin() + k * kDim, z.begin() + (k + 1) * kDim);
    const auto got = gated_fusion(z, m, w, b);
    const auto want = oracle::gated_sum(inputs, w, b);
    for (std::size_t j = 0; j < kDim; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
  }
}

TEST(GatedFusion, ZeroGateAveragesInputs) {
  const std::vector<double> z = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  FusionCache cache;
  const auto out = gated_fusion(z, 3, Tensor(3, 12), Tensor(1, 3), &cache);
  for (double a : cache.weights) EXPECT_NEAR(a, 1.0 / 3.0, 1e-15);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[j], z[j + 4], 1e-12);
}

TEST(GatedFusion, SaturatedBiasSelectsOneInput) {
  const std::vector<double> z = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  Tensor b(1, 3);
  b.data[2] = 40.0;
  const auto out = gated_fusion(z, 3, Tensor(3, 12), b);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[j], z[8 + j], 1e-12);
}

TEST(GatedFusion, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  auto w = random_tensor(3, 3 * kDim, rng);
  auto b = random_tensor(1, 3, rng);
  auto z = random_vec(3 * kDim, rng);
  const auto g = random_vec(kDim, rng);
  FusionCache cache;
  gated_fusion(z, 3, w, b, &cache);
  Tensor g_w(3, 3 * kDim), g_b(1, 3);
  std::vector<double> g_z(3 * kDim, 0.0);
  gated_fusion_backward(cache, g, w, g_w, g_b, g_z);
  const double eps = 1e-6;
  auto central = [&](double& slot) {
    auto loss = [&] {
      const auto out = gated_fusion(z, 3, w, b);
      return std::inner_product(out.begin(), out.end(), g.begin(), 0.0);
    };
    const double saved = slot;
    slot = saved + eps;
    const double up = loss();
    slot = saved - eps;
    const double down = loss();
    slot = saved;
    return (up - down) / (2 * eps);
  };
  for (std::size_t j = 0; j < z.size(); ++j) EXPECT_NEAR(g_z[j], central(z[j]), 1e-8);
  for (std::size_t j = 0; j < w.data.size(); ++j) EXPECT_NEAR(g_w.data[j], central(w.data[j]), 1e-8);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g_b.data[j], central(b.data[j]), 1e-8);
}

TEST(Model, SoftmaxOutputsSumToOne) {
  Rng rng(6);
  const auto sids = tiny_sids(6);
  for (auto mode : {PoolingMode::kCrossAttention, PoolingMode::kSelfAttention}) {
    const auto config = tiny_config(mode);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto params = init_params(config, trial);
      ModelInput in;
      in.user = static_cast<UserId>(1 + rng.below(3));
      in.target = static_cast<ItemId>(1 + rng.below(8));
      for (auto& route : in.routes) {
        const std::size_t len = rng.below(4);
        for (std::size_t i = 0; i < len; ++i) route.push_back(static_cast<ItemId>(1 + rng.below(8)));
      }
      ForwardTrace trace;
      forward(params, config, in, sids, &trace);
      ASSERT_NEAR(trace.probs[0] + trace.probs[1], 1.0, 1e-12);
      ASSERT_NEAR(std::accumulate(trace.level.weights.begin(), trace.level.weights.end(), 0.0),
                  1.0, 1e-12);
      for (const auto& lt : trace.levels) {
        ASSERT_NEAR(std::accumulate(lt.route.weights.begin(), lt.route.weights.end(), 0.0), 1.0,
                    1e-12);
        for (std::size_t r = 0; r < 3; ++r) {
          const auto& pool = lt.pools[r];
          const double total = std::accumulate(pool.weights.begin(), pool.weights.end(), 0.0);
          ASSERT_NEAR(total, in.routes[r].empty() ? 0.0 : 1.0, 1e-12);
          for (std::size_t i = 0; i < pool.n; ++i) {
            if (!pool.mask[i]) {
              ASSERT_EQ(pool.weights[i], 0.0);
            }
          }
        }
      }
    }
  }
}

TEST(Model, ZeroedHeadPredictsHalf) {
  const auto config = tiny_config();
  auto params = init_params(config, 1);
  for (auto& x : params.mlp_w.back().data) x = 0.0;
  for (auto& x : params.mlp_b.back().data) x = 0.0;
  EXPECT_DOUBLE_EQ(forward(params, config, tiny_input(), tiny_sids(1)), 0.5);
}

TEST(Model, PaddingRowsGetNoGradient) {
  const auto config = tiny_config();
  const auto sids = tiny_sids(2);
  const auto params = init_params(config, 2);
  ForwardTrace trace;
  forward(params, config, tiny_input(), sids, &trace);
  auto grads = ModelParams::zeros(config);
  backward(params, config, trace, 1, 1.0, grads);
  for (double g : grads.item_emb.row(0)) EXPECT_EQ(g, 0.0);
  for (const auto& t : grads.sid_emb) {
    for (double g : t.row(0)) EXPECT_EQ(g, 0.0);
  }
}

class ModelGradient
    : public ::testing::TestWithParam<std::tuple<PoolingMode, FeatureMode, int>> {};

TEST_P(ModelGradient, MatchesFiniteDifferenceOracle) {
  const auto [pooling, features, label] = GetParam();
  const auto config = tiny_config(pooling, features);
  const auto sids = tiny_sids(3);
  const auto params = init_params(config, 3);
  const auto input = tiny_input();
  ForwardTrace trace;
  forward(params, config, input, sids, &trace);
  auto grads = ModelParams::zeros(config);
  backward(params, config, trace, label, 1.0, grads);

  double worst = 0.0;
  grads.for_each([&](const std::string& name, const Tensor& g) {
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double n =
          oracle::finite_difference(params, config, input, sids, label, name, i, 1e-5);
      const double rel = std::abs(g.data[i] - n) / std::max(std::abs(g.data[i]) + std::abs(n), 1e-6);
      worst = std::max(worst, rel);
      EXPECT_LT(rel, 1e-4) << name << "[" << i << "] analytic " << g.data[i] << " numeric " << n;
    }
  });
  EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    Variants, ModelGradient,
    ::testing::Combine(::testing::Values(PoolingMode::kCrossAttention, PoolingMode::kAverage,
                                         PoolingMode::kSelfAttention),
                       ::testing::Values(FeatureMode::kFull, FeatureMode::kIdOnly),
                       ::testing::Values(0, 1)));

TEST(Model, LossFromTraceMatchesProbability) {
  const auto config = tiny_config();
  const auto params = init_params(config, 4);
  ForwardTrace trace;
  const double p = forward(params, config, tiny_input(), tiny_sids(4), &trace);
  EXPECT_NEAR(example_loss(trace, 1), -std::log(p), 1e-12);
  EXPECT_NEAR(example_loss(trace, 0), -std::log(1 - p), 1e-12);
}

TEST(Model, UnknownIdsRejected) {
  const auto config = tiny_config();
  const auto params = init_params(config, 5);
  const auto sids = tiny_sids(5);
  auto in = tiny_input();
  in.user = 4;
  EXPECT_THROW(forward(params, config, in, sids), Error);
  in = tiny_input();
  in.routes[1].push_back(9);
  EXPECT_THROW(forward(params, config, in, sids), Error);
}

TEST(Model, InitIsDeterministicWithZeroPadding) {
  const auto config = tiny_config();
  EXPECT_EQ(init_params(config, 8), init_params(config, 8));
  EXPECT_NE(init_params(config, 8), init_params(config, 9));
  const auto params = init_params(config, 8);
  for (double x : params.item_emb.row(0)) EXPECT_EQ(x, 0.0);
}

TEST(Model, MakeInputTruncatesRoutes) {
  MultiRouteResult routes;
  for (std::uint32_t i = 0; i < 5; ++i) {
    routes.target.entries.push_back({i, i + 1, 1, EntryOrigin::kSid});
  }
  routes.global.entries.push_back({0, 7, 2, EntryOrigin::kSid});
  const auto in = make_input(1, 2, routes, 3);
  EXPECT_EQ(in.routes[0], (std::vector<ItemId>{1, 2, 3}));
  EXPECT_TRUE(in.routes[1].empty());
  EXPECT_EQ(in.routes[2], (std::vector<ItemId>{7}));
}

TEST(BceLoss, Examples) {
  const std::vector<double> half = {0.5, 0.5};
  const std::vector<std::uint8_t> labels = {1, 0};
  EXPECT_NEAR(bce_loss(half, labels), std::log(2.0), 1e-15);
  const std::vector<double> wrong = {0.0};
  const std::vector<std::uint8_t> one = {1};
  EXPECT_NEAR(bce_loss(wrong, one), -std::log(1e-12), 1e-9);
  EXPECT_THROW(bce_loss(half, one), Error);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  Checkpoint ck;
  ck.model = tiny_config();
  ck.retrieval.k = 7;
  ck.hasher_seed = 99;
  ck.params = init_params(ck.model, 6);
  const auto path = std::filesystem::temp_directory_path() / "sidflow_model_ck.r2lc";
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.model, ck.model);
  EXPECT_EQ(back.retrieval.k, 7u);
  EXPECT_EQ(back.hasher_seed, 99u);
  EXPECT_EQ(back.params, ck.params);

  std::ofstream(path, std::ios::app | std::ios::binary) << 'x';
  EXPECT_THROW(load_checkpoint(path), Error);
  std::filesystem::resize_file(path, 40);
  EXPECT_THROW(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace sidflow
