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

#include "sidflow/behavior_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "csv.hpp"

namespace sidflow {

std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  SIDFLOW_CHECK(in, ErrorKind::kIo, "cannot open " + path.string());
  const std::string name = path.string();
  std::vector<Interaction> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;  // empty file

  const auto header = csv::split(csv::trim(line));
  const bool header_ok = header.size() == 4 && csv::trim(header[0]) == "user_id" &&
                         csv::trim(header[1]) == "item_id" &&
                         csv::trim(header[2]) == "timestamp" &&
                         csv::trim(header[3]) == "label";
  SIDFLOW_CHECK(header_ok, ErrorKind::kData,
                name + ": unknown schema, expected header user_id,item_id,timestamp,label");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    const auto fields = csv::split(line);
    SIDFLOW_CHECK(fields.size() == 4, ErrorKind::kData, where + ": expected 4 fields");
    Interaction row;
    int label = -1;
    SIDFLOW_CHECK(csv::parse_int(fields[0], row.user) && row.user >= 1, ErrorKind::kData,
                  where + ": invalid user_id");
    SIDFLOW_CHECK(csv::parse_int(fields[1], row.item) && row.item >= 1, ErrorKind::kData,
                  where + ": invalid item_id");
    SIDFLOW_CHECK(csv::parse_int(fields[2], row.timestamp), ErrorKind::kData,
                  where + ": invalid timestamp");
    SIDFLOW_CHECK(csv::parse_int(fields[3], label) && (label == 0 || label == 1),
                  ErrorKind::kData, where + ": label must be 0 or 1");
    row.label = static_cast<std::uint8_t>(label);
    rows.push_back(row);
  }
  return rows;
}

void save_interactions(const std::filesystem::path& path,
                       std::span<const Interaction> interactions) {
  std::ofstream out(path);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << "user_id,item_id,timestamp,label\n";
  for (const auto& r : interactions) {
    out << r.user << ',' << r.item << ',' << r.timestamp << ',' << int{r.label} << '\n';
  }
  SIDFLOW_CHECK(out, ErrorKind::kIo, "write failed: " + path.string());
}

BehaviorStore BehaviorStore::build(std::span<const Interaction> interactions,
                                   std::size_t max_history) {
  BehaviorStore store;
  store.max_history_ = max_history;

  UserId max_user = 0;
  for (const auto& r : interactions) {
    max_user = std::max(max_user, r.user);
    store.max_item_ = std::max(store.max_item_, r.item);
  }
  store.timelines_.resize(static_cast<std::size_t>(max_user) + 1);

  // Clicks per user, stably ordered by timestamp.
  std::vector<std::size_t> order(interactions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return interactions[a].timestamp < interactions[b].timestamp;
  });
  for (std::size_t idx : order) {
    const auto& r = interactions[idx];
    if (r.label != 1) continue;
    auto& t = store.timelines_[r.user];
    t.items.push_back(r.item);
    t.timestamps.push_back(r.timestamp);
  }

  store.instances_.reserve(interactions.size());
  for (const auto& r : interactions) {
    const auto& ts = store.timelines_[r.user].timestamps;
    const auto end = static_cast<std::size_t>(
        std::lower_bound(ts.begin(), ts.end(), r.timestamp) - ts.begin());
    const std::size_t begin = end > max_history ? end - max_history : 0;
    store.instances_.push_back(Instance{r.user, r.item, r.timestamp, r.label,
                                        static_cast<std::uint32_t>(begin),
                                        static_cast<std::uint32_t>(end)});
  }
  return store;
}

HistoryView BehaviorStore::history(const Instance& instance) const {
  SIDFLOW_CHECK(instance.user < timelines_.size(), ErrorKind::kInvalidArgument,
                "unknown user id " + std::to_string(instance.user));
  const auto& t = timelines_[instance.user];
  const std::size_t n = instance.history_size();
  return {std::span<const ItemId>(t.items).subspan(instance.history_begin, n),
          std::span<const std::int64_t>(t.timestamps).subspan(instance.history_begin, n)};
}

HistoryView BehaviorStore::behavior_sequence(UserId user) const {
  SIDFLOW_CHECK(user >= 1 && user < timelines_.size(), ErrorKind::kInvalidArgument,
                "unknown user id " + std::to_string(user));
  const auto& t = timelines_[user];
  const std::size_t begin = t.items.size() > max_history_ ? t.items.size() - max_history_ : 0;
  return {std::span<const ItemId>(t.items).subspan(begin),
          std::span<const std::int64_t>(t.timestamps).subspan(begin)};
}

DatasetSplit temporal_split(std::span<const Instance> instances,
                            std::array<double, 3> ratios) {
  SIDFLOW_CHECK(instances.size() >= 3, ErrorKind::kInvalidArgument,
                "temporal_split needs at least 3 instances, got " +
                    std::to_string(instances.size()));
  for (double r : ratios) {
    SIDFLOW_CHECK(r >= 0.0, ErrorKind::kInvalidArgument, "split ratios must be >= 0");
  }
  SIDFLOW_CHECK(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9,
                ErrorKind::kInvalidArgument, "split ratios must sum to 1");

  std::vector<Instance> sorted(instances.begin(), instances.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Instance& a, const Instance& b) {
    return a.timestamp < b.timestamp;
  });
  const double n = static_cast<double>(sorted.size());
  // The epsilon absorbs representation error (0.8 * 10 must give 8).
  const auto cut1 = static_cast<std::size_t>(std::floor(n * ratios[0] + 1e-9));
  const auto cut2 = std::min(sorted.size(),
      static_cast<std::size_t>(std::floor(n * (ratios[0] + ratios[1]) + 1e-9)));

  DatasetSplit split;
  split.train.assign(sorted.begin(), sorted.begin() + cut1);
  split.validation.assign(sorted.begin() + cut1, sorted.begin() + cut2);
  split.test.assign(sorted.begin() + cut2, sorted.end());
  return split;
}

TokenizerOptions reference_tokenizer(const SynthConfig& config) {
  TokenizerOptions options;
  options.n_levels = config.ref_levels;
  options.codebook_size = config.ref_codebook_size;
  options.max_iters = config.ref_max_iters;
  options.seed = derive_seed(config.seed, "tokenizer");
  return options;
}

SyntheticData generate_synthetic(const SynthConfig& config) {
  SIDFLOW_CHECK(config.n_users >= 1 && config.n_items >= 1 && config.d_enc >= 1 &&
                    config.history_len >= 1 && config.n_clusters >= 1 &&
                    config.n_subclusters >= 1,
                ErrorKind::kInvalidArgument, "generate_synthetic: sizes must be positive");
  Rng rng(derive_seed(config.seed, "data"));
  const std::size_t dim = config.d_enc;
  const std::size_t n_sub_total = config.n_clusters * config.n_subclusters;

  // Cluster centres, sub-cluster offsets, then items around them.
  std::vector<double> centres(config.n_clusters * dim);
  for (auto& v : centres) v = rng.normal(0.0, 4.0);
  std::vector<double> offsets(n_sub_total * dim);
  for (auto& v : offsets) v = rng.normal(0.0, 1.5);

  std::vector<std::size_t> sub_of_item(config.n_items);
  for (std::size_t i = 0; i < config.n_items; ++i) sub_of_item[i] = i % n_sub_total;
  rng.shuffle(sub_of_item);
  std::vector<std::vector<ItemId>> items_of_sub(n_sub_total);
  for (std::size_t i = 0; i < config.n_items; ++i) {
    items_of_sub[sub_of_item[i]].push_back(static_cast<ItemId>(i + 1));
  }

  std::vector<float> values(config.n_items * dim);
  for (std::size_t i = 0; i < config.n_items; ++i) {
    const std::size_t sub = sub_of_item[i];
    const std::size_t cluster = sub / config.n_subclusters;
    for (std::size_t j = 0; j < dim; ++j) {
      values[i * dim + j] = static_cast<float>(centres[cluster * dim + j] +
                                               offsets[sub * dim + j] + rng.normal(0.0, 0.3));
    }
  }
  SyntheticData data{EmbeddingMatrix(config.n_items, dim, std::move(values)), {}};

  const SidMap reference =
      tokenize_catalog(data.embeddings, fit_codebooks(data.embeddings, reference_tokenizer(config)));
  const std::size_t prefix_len = std::min<std::size_t>(2, reference.n_levels());
  auto same_prefix = [&](ItemId a, ItemId b) {
    for (std::size_t l = 0; l < prefix_len; ++l) {
      if (reference[a][l] != reference[b][l]) return false;
    }
    return true;
  };

  auto random_item = [&] { return static_cast<ItemId>(rng.below(config.n_items) + 1); };

  data.interactions.reserve(config.n_users * config.history_len);
  std::vector<ItemId> clicks;
  for (std::size_t u = 0; u < config.n_users; ++u) {
    const auto user = static_cast<UserId>(u + 1);
    // 1-3 interest clusters, each with one or two favoured sub-clusters.
    const std::size_t n_interests = 1 + rng.below(std::min<std::size_t>(3, config.n_clusters));
    std::vector<std::size_t> interests;
    while (interests.size() < n_interests) {
      const std::size_t c = rng.below(config.n_clusters);
      if (std::find(interests.begin(), interests.end(), c) == interests.end()) {
        interests.push_back(c);
      }
    }
    std::vector<std::vector<std::size_t>> favoured(n_interests);
    for (std::size_t k = 0; k < n_interests; ++k) {
      const std::size_t n_fav = 1 + rng.below(std::min<std::size_t>(2, config.n_subclusters));
      for (std::size_t f = 0; f < n_fav; ++f) {
        favoured[k].push_back(interests[k] * config.n_subclusters +
                              rng.below(config.n_subclusters));
      }
    }

    clicks.clear();
    for (std::size_t t = 0; t < config.history_len; ++t) {
      ItemId item = 0;
      if (rng.bernoulli(config.interest_prob)) {
        const std::size_t k = rng.below(n_interests);
        const std::size_t sub = rng.bernoulli(0.7)
                                    ? favoured[k][rng.below(favoured[k].size())]
                                    : interests[k] * config.n_subclusters +
                                          rng.below(config.n_subclusters);
        const auto& pool = items_of_sub[sub];
        item = pool.empty() ? random_item() : pool[rng.below(pool.size())];
      } else {
        item = random_item();
      }

      const std::size_t window_begin = clicks.size() > kMaxHistory ? clicks.size() - kMaxHistory : 0;
      std::size_t matches = 0;
      for (std::size_t h = window_begin; h < clicks.size(); ++h) {
        if (same_prefix(clicks[h], item)) ++matches;
      }
      const double p = config.click_base +
                       config.click_gain *
                           (1.0 - std::exp(-static_cast<double>(matches) / config.click_scale));
      const std::uint8_t label = rng.bernoulli(p) ? 1 : 0;
      const auto timestamp = static_cast<std::int64_t>(t * 1000 + rng.below(1000));
      data.interactions.push_back(Interaction{user, item, timestamp, label});
      if (label == 1) clicks.push_back(item);
    }
  }
  return data;
}

}  // namespace sidflow
