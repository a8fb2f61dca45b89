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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "csv.hpp"

namespace sidflow {

namespace {

constexpr std::uint16_t kEmbeddingVersion = 1;
constexpr std::uint16_t kCodebookVersion = 1;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t n_items, std::size_t dim,
                                 std::vector<float> values)
    : n_items_(n_items), dim_(dim), values_(std::move(values)) {
  SIDFLOW_CHECK(n_items >= 1 && dim >= 1, ErrorKind::kInvalidArgument,
                "embedding matrix needs n_items >= 1 and d_enc >= 1");
  SIDFLOW_CHECK(values_.size() == n_items * dim, ErrorKind::kInvalidArgument,
                "embedding matrix: value count does not match n_items * d_enc");
  for (std::size_t i = 0; i < n_items_; ++i) {
    SIDFLOW_CHECK(all_finite(row(i)), ErrorKind::kData,
                  "embedding for item " + std::to_string(i + 1) + " has non-finite values");
  }
}

SemanticId make_sid(std::initializer_list<std::uint16_t> codes) {
  SIDFLOW_CHECK(codes.size() >= 1 && codes.size() <= kMaxSidLevels,
                ErrorKind::kInvalidArgument, "semantic id needs 1..4 levels");
  SemanticId sid;
  std::copy(codes.begin(), codes.end(), sid.codes.begin());
  sid.n_levels = static_cast<std::uint8_t>(codes.size());
  return sid;
}

Codebook::Codebook(std::size_t n_levels, std::size_t codebook_size, std::size_t dim,
                   std::vector<float> centroids)
    : n_levels_(n_levels), codebook_size_(codebook_size), dim_(dim),
      centroids_(std::move(centroids)) {
  SIDFLOW_CHECK(n_levels >= 1 && n_levels <= kMaxSidLevels, ErrorKind::kInvalidArgument,
                "codebook needs 1..4 levels");
  SIDFLOW_CHECK(codebook_size >= 1 && codebook_size <= kMaxCodebookSize,
                ErrorKind::kInvalidArgument, "codebook size must be in [1, 65536]");
  SIDFLOW_CHECK(dim >= 1, ErrorKind::kInvalidArgument, "codebook dimension must be >= 1");
  SIDFLOW_CHECK(centroids_.size() == n_levels * codebook_size * dim,
                ErrorKind::kInvalidArgument, "codebook: centroid count mismatch");
  SIDFLOW_CHECK(all_finite(centroids_), ErrorKind::kData, "codebook has non-finite centroids");
}

SidMap::SidMap(std::size_t n_levels, std::vector<SemanticId> by_item)
    : n_levels_(n_levels), by_item_(std::move(by_item)) {
  SIDFLOW_CHECK(n_levels >= 1 && n_levels <= kMaxSidLevels, ErrorKind::kInvalidArgument,
                "sid map needs 1..4 levels");
  if (by_item_.empty()) by_item_.resize(1);
  by_item_[0] = SemanticId{};
  by_item_[0].n_levels = static_cast<std::uint8_t>(n_levels);
  for (std::size_t i = 1; i < by_item_.size(); ++i) {
    SIDFLOW_CHECK(by_item_[i].n_levels == n_levels, ErrorKind::kInvalidArgument,
                  "sid map: item " + std::to_string(i) + " has the wrong number of levels");
  }
}

const SemanticId& SidMap::at(ItemId item) const {
  SIDFLOW_CHECK(contains(item), ErrorKind::kInvalidArgument,
                "unknown item id " + std::to_string(item));
  return by_item_[item];
}

namespace kmeans {

std::uint32_t nearest(std::span<const double> point, std::span<const double> centroids,
                      std::size_t k, double* distance) {
  const std::size_t dim = point.size();
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(point, centroids.subspan(c * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  if (distance) *distance = best_d;
  return best;
}

std::vector<double> plus_plus_init(std::span<const double> points, std::size_t n,
                                   std::size_t dim, std::size_t k, Rng& rng) {
  std::vector<double> centroids(k * dim);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t slot, std::size_t idx) {
    std::copy_n(points.begin() + idx * dim, dim, centroids.begin() + slot * dim);
    const auto c = std::span<const double>(centroids).subspan(slot * dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
      min_d[i] = std::min(min_d[i], squared_distance(points.subspan(i * dim, dim), c));
    }
  };

  take(0, rng.below(n));
  for (std::size_t slot = 1; slot < k; ++slot) {
    double total = 0.0;
    for (double d : min_d) total += d;
    std::size_t pick = n - 1;
    if (total <= 0.0) {
      pick = rng.below(n);
    } else {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_d[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    }
    take(slot, pick);
  }
  return centroids;
}

namespace {

bool assign_all(std::span<const double> points, std::size_t n, std::size_t dim,
                std::span<const double> centroids, std::size_t k,
                std::vector<std::uint32_t>& assignment, std::vector<double>& error) {
  bool changed = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = nearest(points.subspan(i * dim, dim), centroids, k, &error[i]);
    if (a != assignment[i]) {
      assignment[i] = a;
      changed = true;
    }
  }
  return changed;
}

}  // namespace

Result lloyd(std::span<const double> points, std::size_t n, std::size_t dim,
             std::vector<double> init, std::size_t max_iters) {
  const std::size_t k = init.size() / dim;
  Result result;
  result.centroids = std::move(init);
  result.assignment.assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> error(n);
  assign_all(points, n, dim, result.centroids, k, result.assignment, error);

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = result.assignment[i];
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += points[i * dim + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) {
          result.centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
        }
        continue;
      }
      // Empty cluster: move it onto the worst-quantized point. Lowest index
      // wins ties; a point is used at most once per iteration.
      std::size_t worst = 0;
      double worst_err = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (error[i] > worst_err) {
          worst_err = error[i];
          worst = i;
        }
      }
      error[worst] = -1.0;
      std::copy_n(points.begin() + worst * dim, dim, result.centroids.begin() + c * dim);
    }
    result.iterations = it + 1;
    if (!assign_all(points, n, dim, result.centroids, k, result.assignment, error)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

Result mini_batch(std::span<const double> points, std::size_t n, std::size_t dim,
                  std::vector<double> init, std::size_t max_iters,
                  std::size_t batch_size, Rng& rng) {
  const std::size_t k = init.size() / dim;
  Result result;
  result.centroids = std::move(init);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t b = 0; b < batch_size; ++b) {
      const std::size_t i = rng.below(n);
      const auto x = points.subspan(i * dim, dim);
      const std::size_t c = nearest(x, result.centroids, k);
      const double eta = 1.0 / static_cast<double>(++counts[c]);
      for (std::size_t j = 0; j < dim; ++j) {
        double& v = result.centroids[c * dim + j];
        v = (1.0 - eta) * v + eta * x[j];
      }
    }
    result.iterations = it + 1;
  }
  result.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.assignment[i] = nearest(points.subspan(i * dim, dim), result.centroids, k);
  }
  return result;
}

}  // namespace kmeans

std::uint64_t level_seed(std::uint64_t seed, std::size_t level) {
  return derive_seed(seed, "level" + std::to_string(level));
}

Codebook fit_codebooks(const EmbeddingMatrix& embeddings, const TokenizerOptions& options) {
  SIDFLOW_CHECK(embeddings.n_items() >= 1, ErrorKind::kInvalidArgument,
                "fit_codebooks: no embeddings");
  SIDFLOW_CHECK(options.n_levels >= 1 && options.n_levels <= kMaxSidLevels,
                ErrorKind::kInvalidArgument, "fit_codebooks: n_levels must be in [1, 4]");
  SIDFLOW_CHECK(options.codebook_size >= 1 && options.codebook_size <= kMaxCodebookSize,
                ErrorKind::kInvalidArgument,
                "fit_codebooks: codebook_size must be in [1, 65536]");
  SIDFLOW_CHECK(options.max_iters >= 1, ErrorKind::kInvalidArgument,
                "fit_codebooks: max_iters must be >= 1");

  const std::size_t n = embeddings.n_items();
  const std::size_t dim = embeddings.dim();
  const std::size_t k = options.codebook_size;

  std::vector<double> residual(embeddings.values().begin(), embeddings.values().end());
  std::vector<float> all_centroids;
  all_centroids.reserve(options.n_levels * k * dim);

  for (std::size_t level = 0; level < options.n_levels; ++level) {
    Rng rng(level_seed(options.seed, level));
    auto init = kmeans::plus_plus_init(residual, n, dim, k, rng);
    kmeans::Result fitted =
        (options.batch_size == 0 || options.batch_size >= n)
            ? kmeans::lloyd(residual, n, dim, std::move(init), options.max_iters)
            : kmeans::mini_batch(residual, n, dim, std::move(init), options.max_iters,
                                 options.batch_size, rng);

    std::vector<double> stored(k * dim);
    for (std::size_t j = 0; j < k * dim; ++j) {
      const float f = static_cast<float>(fitted.centroids[j]);
      all_centroids.push_back(f);
      stored[j] = f;
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto r = std::span<double>(residual).subspan(i * dim, dim);
      const std::size_t c = kmeans::nearest(r, stored, k);
      for (std::size_t j = 0; j < dim; ++j) r[j] -= stored[c * dim + j];
    }
  }
  return Codebook(options.n_levels, k, dim, std::move(all_centroids));
}

namespace {

// Nearest code at every level, subtracting the chosen centroid as we go.
// On return `residual` holds what is left after `levels` levels.
SemanticId quantize(std::vector<double>& residual, const Codebook& codebook,
                    std::size_t levels) {
  SemanticId sid;
  sid.n_levels = static_cast<std::uint8_t>(codebook.n_levels());
  const std::size_t dim = codebook.dim();
  for (std::size_t level = 0; level < levels; ++level) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < codebook.codebook_size(); ++c) {
      const auto centroid = codebook.centroid(level, c);
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = residual[j] - static_cast<double>(centroid[j]);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    sid.codes[level] = static_cast<std::uint16_t>(best);
    const auto centroid = codebook.centroid(level, best);
    for (std::size_t j = 0; j < dim; ++j) residual[j] -= static_cast<double>(centroid[j]);
  }
  return sid;
}

}  // namespace

SemanticId assign_sid(std::span<const float> embedding, const Codebook& codebook) {
  SIDFLOW_CHECK(embedding.size() == codebook.dim(), ErrorKind::kInvalidArgument,
                "assign_sid: embedding dimension " + std::to_string(embedding.size()) +
                    " does not match codebook dimension " + std::to_string(codebook.dim()));
  std::vector<double> residual(embedding.begin(), embedding.end());
  return quantize(residual, codebook, codebook.n_levels());
}

SidMap tokenize_catalog(const EmbeddingMatrix& embeddings, const Codebook& codebook) {
  SIDFLOW_CHECK(embeddings.dim() == codebook.dim(), ErrorKind::kInvalidArgument,
                "tokenize_catalog: embedding dimension " + std::to_string(embeddings.dim()) +
                    " does not match codebook dimension " + std::to_string(codebook.dim()));
  std::vector<SemanticId> by_item(embeddings.n_items() + 1);
  for (std::size_t i = 0; i < embeddings.n_items(); ++i) {
    by_item[i + 1] = assign_sid(embeddings.row(i), codebook);
  }
  return SidMap(codebook.n_levels(), std::move(by_item));
}

double quantization_error(const EmbeddingMatrix& embeddings, const Codebook& codebook,
                          std::size_t levels) {
  SIDFLOW_CHECK(levels <= codebook.n_levels(), ErrorKind::kInvalidArgument,
                "quantization_error: more levels than the codebook has");
  SIDFLOW_CHECK(embeddings.dim() == codebook.dim(), ErrorKind::kInvalidArgument,
                "quantization_error: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.n_items(); ++i) {
    const auto row = embeddings.row(i);
    std::vector<double> residual(row.begin(), row.end());
    quantize(residual, codebook, levels);
    for (double r : residual) total += r * r;
  }
  return total;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  io::write_magic(out, "EMBF");
  io::write_le<std::uint16_t>(out, kEmbeddingVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_items()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
  for (float v : m.values()) io::write_le<float>(out, v);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "write failed: " + path.string());
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SIDFLOW_CHECK(in, ErrorKind::kIo, "cannot open " + path.string());
  const std::string name = path.string();
  io::expect_magic(in, "EMBF", name);
  const auto version = io::read_le<std::uint16_t>(in, name);
  SIDFLOW_CHECK(version == kEmbeddingVersion, ErrorKind::kData,
                name + ": unsupported EMBF version " + std::to_string(version));
  const auto n = io::read_le<std::uint32_t>(in, name);
  const auto dim = io::read_le<std::uint32_t>(in, name);
  SIDFLOW_CHECK(n >= 1 && dim >= 1, ErrorKind::kData, name + ": empty embedding matrix");
  std::vector<float> values(static_cast<std::size_t>(n) * dim);
  for (auto& v : values) v = io::read_le<float>(in, name);
  SIDFLOW_CHECK(in.peek() == std::char_traits<char>::eof(), ErrorKind::kData,
                name + ": trailing bytes after embedding data");
  return EmbeddingMatrix(n, dim, std::move(values));
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  std::ofstream out(path, std::ios::binary);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  io::write_magic(out, "SIDC");
  io::write_le<std::uint16_t>(out, kCodebookVersion);
  io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(codebook.n_levels()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(codebook.codebook_size()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(codebook.dim()));
  for (float v : codebook.centroids()) io::write_le<float>(out, v);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "write failed: " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SIDFLOW_CHECK(in, ErrorKind::kIo, "cannot open " + path.string());
  const std::string name = path.string();
  io::expect_magic(in, "SIDC", name);
  const auto version = io::read_le<std::uint16_t>(in, name);
  SIDFLOW_CHECK(version == kCodebookVersion, ErrorKind::kData,
                name + ": unsupported SIDC version " + std::to_string(version));
  const auto levels = io::read_le<std::uint16_t>(in, name);
  const auto size = io::read_le<std::uint32_t>(in, name);
  const auto dim = io::read_le<std::uint32_t>(in, name);
  SIDFLOW_CHECK(levels >= 1 && levels <= kMaxSidLevels && size >= 1 &&
                    size <= kMaxCodebookSize && dim >= 1,
                ErrorKind::kData, name + ": invalid codebook header");
  std::vector<float> values(static_cast<std::size_t>(levels) * size * dim);
  for (auto& v : values) v = io::read_le<float>(in, name);
  return Codebook(levels, size, dim, std::move(values));
}

void save_sid_map(const std::filesystem::path& path, const SidMap& sids) {
  std::ofstream out(path);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << "item_id";
  for (std::size_t l = 0; l < sids.n_levels(); ++l) out << ",c" << (l + 1);
  out << '\n';
  for (ItemId item = 1; item <= sids.n_items(); ++item) {
    out << item;
    for (std::size_t l = 0; l < sids.n_levels(); ++l) out << ',' << sids[item][l];
    out << '\n';
  }
  SIDFLOW_CHECK(out, ErrorKind::kIo, "write failed: " + path.string());
}

SidMap load_sid_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  SIDFLOW_CHECK(in, ErrorKind::kIo, "cannot open " + path.string());
  const std::string name = path.string();
  std::string line;
  SIDFLOW_CHECK(static_cast<bool>(std::getline(in, line)), ErrorKind::kData,
                name + ": missing header");
  const auto header = csv::split(csv::trim(line));
  const std::size_t levels = header.size() - 1;
  bool header_ok = header.size() >= 2 && levels <= kMaxSidLevels &&
                   csv::trim(header[0]) == "item_id";
  for (std::size_t l = 0; header_ok && l < levels; ++l) {
    header_ok = csv::trim(header[l + 1]) == "c" + std::to_string(l + 1);
  }
  SIDFLOW_CHECK(header_ok, ErrorKind::kData,
                name + ": expected header item_id,c1,...,cL with 1..4 levels");

  std::vector<SemanticId> by_item(1);
  std::vector<bool> seen(1, true);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split(line);
    const std::string where = name + ":" + std::to_string(line_no);
    SIDFLOW_CHECK(fields.size() == levels + 1, ErrorKind::kData,
                  where + ": expected " + std::to_string(levels + 1) + " fields");
    ItemId item = 0;
    SIDFLOW_CHECK(csv::parse_int(fields[0], item) && item >= 1, ErrorKind::kData,
                  where + ": invalid item_id");
    SemanticId sid;
    sid.n_levels = static_cast<std::uint8_t>(levels);
    for (std::size_t l = 0; l < levels; ++l) {
      std::uint16_t code = 0;
      SIDFLOW_CHECK(csv::parse_int(fields[l + 1], code), ErrorKind::kData,
                    where + ": invalid code in column c" + std::to_string(l + 1));
      sid.codes[l] = code;
    }
    if (item >= by_item.size()) {
      by_item.resize(item + 1);
      seen.resize(item + 1, false);
    }
    SIDFLOW_CHECK(!seen[item], ErrorKind::kData,
                  where + ": duplicate item_id " + std::to_string(item));
    seen[item] = true;
    by_item[item] = sid;
  }
  for (std::size_t i = 1; i < seen.size(); ++i) {
    SIDFLOW_CHECK(seen[i], ErrorKind::kData,
                  name + ": item ids must cover 1..n; missing " + std::to_string(i));
  }
  return SidMap(levels, std::move(by_item));
}

}  // namespace sidflow
