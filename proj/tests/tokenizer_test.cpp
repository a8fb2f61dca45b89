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

#include "sidflow/tokenizer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "oracles.hpp"
#include "sidflow/common.hpp"

namespace sidflow {
namespace {

EmbeddingMatrix gaussian(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n * dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return EmbeddingMatrix(n, dim, std::move(v));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sidflow_tok_" + name);
}

TEST(Tokenizer, SingleItemGetsZeroCodes) {
  const EmbeddingMatrix m(1, 3, {0.5f, -1.0f, 2.0f});
  TokenizerOptions opts;
  opts.codebook_size = 1;
  const auto codebook = fit_codebooks(m, opts);
  EXPECT_EQ(assign_sid(m.row(0), codebook), make_sid({0, 0, 0}));
  EXPECT_NEAR(quantization_error(m, codebook, 3), 0.0, 1e-10);
}

TEST(Tokenizer, ErrorNonIncreasingAcrossLevels) {
  const auto m = gaussian(500, 8, 21);
  for (std::size_t levels : {1u, 2u, 3u}) {
    TokenizerOptions opts;
    opts.n_levels = levels;
    opts.codebook_size = 16;
    opts.seed = 4;
    const auto codebook = fit_codebooks(m, opts);
    double prev = quantization_error(m, codebook, 0);
    for (std::size_t l = 1; l <= levels; ++l) {
      const double err = quantization_error(m, codebook, l);
      EXPECT_LE(err, prev + 1e-9) << "levels " << levels << " prefix " << l;
      prev = err;
    }
  }
}

class ExhaustiveAssign : public ::testing::TestWithParam<std::size_t> {};

TEST_P(ExhaustiveAssign, MatchesNearestCentroidScan) {
  const auto m = gaussian(500, 8, 22);
  TokenizerOptions opts;
  opts.codebook_size = GetParam();
  opts.seed = 9;
  opts.max_iters = 10;
  const auto codebook = fit_codebooks(m, opts);
  const auto sids = tokenize_catalog(m, codebook);
  for (std::size_t i = 0; i < m.n_items(); ++i) {
    EXPECT_EQ(sids[static_cast<ItemId>(i + 1)], oracle::exhaustive_sid(m.row(i), codebook))
        << "item " << i + 1;
  }
}

INSTANTIATE_TEST_SUITE_P(CodebookSizes, ExhaustiveAssign, ::testing::Values(2, 8, 16, 64));

TEST(Kmeans, LloydMatchesTextbook) {
  // Four separated blobs so no cluster empties out.
  Rng rng(3);
  const std::size_t n = 400, dim = 2;
  std::vector<double> points(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = (i % 4 < 2) ? -10.0 : 10.0;
    const double cy = (i % 2) ? -10.0 : 10.0;
    points[i * dim] = cx + rng.normal();
    points[i * dim + 1] = cy + rng.normal();
  }
  Rng init_rng(level_seed(5, 0));
  const auto init = kmeans::plus_plus_init(points, n, dim, 4, init_rng);
  const auto got = kmeans::lloyd(points, n, dim, init, 200);
  const auto want = oracle::lloyd(points, n, dim, init, 200);
  EXPECT_TRUE(got.converged);
  ASSERT_EQ(got.centroids.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.centroids[i], want[i], 1e-12);
}

TEST(Kmeans, NearestPrefersLowestIndexOnTies) {
  const std::vector<double> centroids = {1.0, 0.0, -1.0, 0.0};
  const std::vector<double> point = {0.0, 0.0};
  double d = -1.0;
  EXPECT_EQ(kmeans::nearest(point, centroids, 2, &d), 0u);
  EXPECT_DOUBLE_EQ(d, 1.0);
}

TEST(Kmeans, DuplicatePointsDoNotBreakSeeding) {
  const std::vector<double> points(10 * 3, 1.5);
  Rng rng(1);
  const auto init = kmeans::plus_plus_init(points, 10, 3, 4, rng);
  for (double x : init) EXPECT_EQ(x, 1.5);
  const auto r = kmeans::lloyd(points, 10, 3, init, 5);
  for (double x : r.centroids) EXPECT_EQ(x, 1.5);
}

TEST(Kmeans, MiniBatchReducesError) {
  const auto m = gaussian(400, 4, 30);
  TokenizerOptions full;
  full.n_levels = 1;
  full.codebook_size = 8;
  full.seed = 2;
  TokenizerOptions batched = full;
  batched.batch_size = 64;
  const double base = quantization_error(m, fit_codebooks(m, full), 0);
  const double err = quantization_error(m, fit_codebooks(m, batched), 1);
  EXPECT_LT(err, base);
}

TEST(Tokenizer, Deterministic) {
  const auto m = gaussian(300, 6, 31);
  TokenizerOptions opts;
  opts.codebook_size = 8;
  opts.seed = 77;
  EXPECT_EQ(fit_codebooks(m, opts), fit_codebooks(m, opts));
}

TEST(Tokenizer, RejectsBadOptions) {
  const auto m = gaussian(10, 2, 1);
  TokenizerOptions opts;
  opts.n_levels = 0;
  EXPECT_THROW(fit_codebooks(m, opts), Error);
  opts.n_levels = 5;
  EXPECT_THROW(fit_codebooks(m, opts), Error);
  opts.n_levels = 3;
  opts.codebook_size = 0;
  EXPECT_THROW(fit_codebooks(m, opts), Error);
}

TEST(FileFormats, EmbeddingsRoundTrip) {
  const auto m = gaussian(17, 5, 40);
  const auto path = temp_path("emb.embf");
  save_embeddings(path, m);
  EXPECT_EQ(load_embeddings(path), m);
  std::filesystem::remove(path);
}

TEST(FileFormats, CodebookRoundTrip) {
  const auto m = gaussian(50, 4, 41);
  TokenizerOptions opts;
  opts.codebook_size = 4;
  const auto codebook = fit_codebooks(m, opts);
  const auto path = temp_path("codebook.sidc");
  save_codebook(path, codebook);
  EXPECT_EQ(load_codebook(path), codebook);
  std::filesystem::remove(path);
}

TEST(FileFormats, SidMapRoundTrip) {
  const SidMap sids(3, {SemanticId{}, make_sid({1, 2, 3}), make_sid({0, 0, 65535})});
  const auto path = temp_path("sids.csv");
  save_sid_map(path, sids);
  EXPECT_EQ(load_sid_map(path), sids);
  std::filesystem::remove(path);
}

TEST(FileFormats, TruncatedEmbeddingsRejected) {
  const auto m = gaussian(4, 4, 42);
  const auto path = temp_path("trunc.embf");
  save_embeddings(path, m);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(load_embeddings(path), Error);
  std::filesystem::remove(path);
}

TEST(FileFormats, MissingFileIsIoError) {
  try {
    load_codebook(temp_path("does_not_exist"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(SidMap, AtRejectsUnknownItems) {
  const SidMap sids(3, {SemanticId{}, make_sid({1, 2, 3})});
  EXPECT_EQ(sids.at(1), make_sid({1, 2, 3}));
  EXPECT_THROW(sids.at(0), Error);
  EXPECT_THROW(sids.at(2), Error);
}

}  // namespace
}  // namespace sidflow
