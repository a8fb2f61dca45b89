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

// Residual k-means tokenizer: fits per-level codebooks on item semantic
// embeddings and maps every item to a short tuple of discrete codes.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sidflow/common.hpp"

namespace sidflow {

inline constexpr std::size_t kMaxSidLevels = 4;
inline constexpr std::size_t kMaxCodebookSize = 65536;

/// Row-major float matrix, one row per item. Row i holds item id i + 1.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t n_items, std::size_t dim, std::vector<float> values);

  std::size_t n_items() const { return n_items_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const float> values() const { return values_; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t n_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

struct SemanticId {
  std::array<std::uint16_t, kMaxSidLevels> codes{};
  std::uint8_t n_levels = 0;

  std::uint16_t operator[](std::size_t level) const { return codes[level]; }
  std::size_t size() const { return n_levels; }

  friend bool operator==(const SemanticId&, const SemanticId&) = default;
};

SemanticId make_sid(std::initializer_list<std::uint16_t> codes);

class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t n_levels, std::size_t codebook_size, std::size_t dim,
           std::vector<float> centroids);

  std::size_t n_levels() const { return n_levels_; }
  std::size_t codebook_size() const { return codebook_size_; }
  std::size_t dim() const { return dim_; }

  std::span<const float> centroid(std::size_t level, std::size_t code) const {
    return {centroids_.data() + (level * codebook_size_ + code) * dim_, dim_};
  }
  std::span<const float> centroids() const { return centroids_; }

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::size_t n_levels_ = 0;
  std::size_t codebook_size_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> centroids_;  // level-major, then code, then dim
};

/// item id -> SemanticId for items 1..n_items. Slot 0 is the padding item.
class SidMap {
 public:
  SidMap() = default;
  SidMap(std::size_t n_levels, std::vector<SemanticId> by_item);

  std::size_t n_levels() const { return n_levels_; }
  std::size_t n_items() const { return by_item_.empty() ? 0 : by_item_.size() - 1; }
  bool contains(ItemId item) const { return item >= 1 && item < by_item_.size(); }

  /// Throws kInvalidArgument for ids outside 1..n_items.
  const SemanticId& at(ItemId item) const;
  const SemanticId& operator[](ItemId item) const { return by_item_[item]; }

  friend bool operator==(const SidMap&, const SidMap&) = default;

 private:
  std::size_t n_levels_ = 0;
  std::vector<SemanticId> by_item_;
};

struct TokenizerOptions {
  std::size_t n_levels = 3;
  std::size_t codebook_size = 256;
  std::size_t max_iters = 50;
  // 0 (or >= n_items) means full-batch Lloyd iterations.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
};

namespace kmeans {

struct Result {
  std::vector<double> centroids;  // k x dim
  std::vector<std::uint32_t> assignment;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Index of the nearest centroid by squared Euclidean distance; ties go to
/// the lowest index.
std::uint32_t nearest(std::span<const double> point, std::span<const double> centroids,
                      std::size_t k, double* distance = nullptr);

/// k-means++ seeding. When every remaining point coincides with a chosen
/// centroid, the next centroid is drawn uniformly (duplicates allowed).
std::vector<double> plus_plus_init(std::span<const double> points, std::size_t n,
                                   std::size_t dim, std::size_t k, Rng& rng);

/// Full-batch Lloyd iterations from `init`. Empty clusters are moved onto the
/// point with the largest current quantization error.
Result lloyd(std::span<const double> points, std::size_t n, std::size_t dim,
             std::vector<double> init, std::size_t max_iters);

/// Mini-batch variant with per-centroid 1/count learning rates.
Result mini_batch(std::span<const double> points, std::size_t n, std::size_t dim,
                  std::vector<double> init, std::size_t max_iters,
                  std::size_t batch_size, Rng& rng);

}  // namespace kmeans

/// Seed of the PRNG stream used to fit `level` (0-based).
std::uint64_t level_seed(std::uint64_t seed, std::size_t level);

/// Residual k-means: level l clusters the residuals left after levels < l.
/// Centroids are stored as float; residuals subtract the stored values so
/// fitting and assign_sid agree exactly.
Codebook fit_codebooks(const EmbeddingMatrix& embeddings, const TokenizerOptions& options);

SemanticId assign_sid(std::span<const float> embedding, const Codebook& codebook);

SidMap tokenize_catalog(const EmbeddingMatrix& embeddings, const Codebook& codebook);

/// Sum over items of the squared norm of the residual left after quantizing
/// with the first `levels` levels (0 gives the squared norm of the data).
double quantization_error(const EmbeddingMatrix& embeddings, const Codebook& codebook,
                          std::size_t levels);

// "EMBF" v1: magic, u16 version, u32 n_items, u32 d_enc, f32 values.
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

// "SIDC" v1: magic, u16 version, u16 n_levels, u32 D, u32 d_enc, f32 centroids.
void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);

// CSV with header item_id,c1,...,cL.
void save_sid_map(const std::filesystem::path& path, const SidMap& sids);
SidMap load_sid_map(const std::filesystem::path& path);

}  // namespace sidflow
