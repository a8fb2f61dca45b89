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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace sidflow {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

// In-place softmax over `idx` entries of v; other entries are left alone.
void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

// y = x W for a row vector x (len rows) and W (rows x cols).
void vec_mat(std::span<const double> x, const Tensor& w, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t a = 0; a < w.rows; ++a) {
    const double xa = x[a];
    if (xa == 0.0) continue;
    const double* row = w.data.data() + a * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) y[c] += xa * row[c];
  }
}

// y = W x for W (rows x cols) and x (cols).
void mat_vec(const Tensor& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.data.data() + r * w.cols;
    double s = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

// g_x += W g_y for y = x W; g_W += x^T g_y.
void vec_mat_backward(std::span<const double> x, const Tensor& w, std::span<const double> g_y,
                      Tensor& g_w, std::span<double> g_x) {
  for (std::size_t a = 0; a < w.rows; ++a) {
    const double* row = w.data.data() + a * w.cols;
    double* grow = g_w.data.data() + a * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) {
      acc += row[c] * g_y[c];
      grow[c] += x[a] * g_y[c];
    }
    if (!g_x.empty()) g_x[a] += acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (auto& v : t.data) v = rng.normal(0.0, stddev);
}

void fill_uniform(Tensor& t, Rng& rng, double bound) {
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

}  // namespace

void ModelConfig::validate() const {
  SIDFLOW_CHECK(d_model >= 1, ErrorKind::kInvalidArgument, "model: d_model must be >= 1");
  SIDFLOW_CHECK(k_max >= 1, ErrorKind::kInvalidArgument, "model: k_max must be >= 1");
  SIDFLOW_CHECK(n_sid_levels >= 1 && n_sid_levels <= kMaxSidLevels,
                ErrorKind::kInvalidArgument, "model: n_sid_levels must be in [1, 4]");
  SIDFLOW_CHECK(codebook_size >= 1 && codebook_size <= kMaxCodebookSize,
                ErrorKind::kInvalidArgument, "model: codebook_size must be in [1, 65536]");
  for (std::size_t h : hidden) {
    SIDFLOW_CHECK(h >= 1, ErrorKind::kInvalidArgument, "model: hidden layer sizes must be >= 1");
  }
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("user_emb", user_emb);
  fn("item_emb", item_emb);
  for (std::size_t l = 0; l < sid_emb.size(); ++l) fn("sid_emb." + std::to_string(l + 1), sid_emb[l]);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const std::string p = "level." + std::to_string(l) + ".";
    fn(p + "w_q", levels[l].w_q);
    fn(p + "w_k", levels[l].w_k);
    fn(p + "w_v", levels[l].w_v);
    fn(p + "route_gate_w", levels[l].route_gate_w);
    fn(p + "route_gate_b", levels[l].route_gate_b);
  }
  fn("level_gate_w", level_gate_w);
  fn("level_gate_b", level_gate_b);
  for (std::size_t l = 0; l < mlp_w.size(); ++l) {
    fn("mlp." + std::to_string(l) + ".w", mlp_w[l]);
    fn("mlp." + std::to_string(l) + ".b", mlp_b[l]);
  }
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t levels = config.n_levels();
  ModelParams p;
  p.user_emb = Tensor(config.n_users + 1, d);
  p.item_emb = Tensor(config.n_items + 1, d);
  for (std::size_t l = 1; l < levels; ++l) p.sid_emb.emplace_back(config.codebook_size + 1, d);
  p.levels.resize(levels);
  for (auto& lp : p.levels) {
    lp.w_q = Tensor(d, d);
    lp.w_k = Tensor(d, d);
    lp.w_v = Tensor(d, d);
    lp.route_gate_w = Tensor(3, 3 * d);
    lp.route_gate_b = Tensor(1, 3);
  }
  p.level_gate_w = Tensor(levels, levels * d);
  p.level_gate_b = Tensor(1, levels);
  std::size_t in = 3 * d;
  for (std::size_t h : config.hidden) {
    p.mlp_w.emplace_back(h, in);
    p.mlp_b.emplace_back(1, h);
    in = h;
  }
  p.mlp_w.emplace_back(2, in);
  p.mlp_b.emplace_back(1, 2);
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(seed);
  const double d = static_cast<double>(config.d_model);

  auto embed = [&](Tensor& t) {
    fill_normal(t, rng, 0.1);
    std::fill_n(t.data.begin(), t.cols, 0.0);  // padding row
  };
  embed(p.user_emb);
  embed(p.item_emb);
  for (auto& t : p.sid_emb) embed(t);

  const double xavier = std::sqrt(6.0 / (2.0 * d));
  for (auto& lp : p.levels) {
    fill_uniform(lp.w_q, rng, xavier);
    fill_uniform(lp.w_k, rng, xavier);
    fill_uniform(lp.w_v, rng, xavier);
    const double b = 1.0 / std::sqrt(static_cast<double>(lp.route_gate_w.cols));
    fill_uniform(lp.route_gate_w, rng, b);
    fill_uniform(lp.route_gate_b, rng, b);
  }
  const double lb = 1.0 / std::sqrt(static_cast<double>(p.level_gate_w.cols));
  fill_uniform(p.level_gate_w, rng, lb);
  fill_uniform(p.level_gate_b, rng, lb);
  for (std::size_t l = 0; l < p.mlp_w.size(); ++l) {
    const double b = 1.0 / std::sqrt(static_cast<double>(p.mlp_w[l].cols));
    fill_uniform(p.mlp_w[l], rng, b);
    fill_uniform(p.mlp_b[l], rng, b);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Route pooling

std::vector<double> pool_route(std::span<const double> target, std::span<const double> tokens,
                               std::span<const std::uint8_t> mask, const LevelParams& params,
                               PoolingMode mode, PoolCache* cache) {
  const std::size_t d = target.size();
  SIDFLOW_CHECK(d == params.w_q.rows && tokens.size() == mask.size() * d,
                ErrorKind::kInvalidArgument, "pool_route: shape mismatch");
  PoolCache local;
  PoolCache& c = cache ? *cache : local;
  c.mode = mode;
  c.n = mask.size();
  c.d = d;
  c.target.assign(target.begin(), target.end());
  c.tokens.assign(tokens.begin(), tokens.end());
  c.mask.assign(mask.begin(), mask.end());
  c.active.clear();
  for (std::size_t i = 0; i < c.n; ++i) {
    if (mask[i]) c.active.push_back(i);
  }
  c.weights.assign(c.n, 0.0);
  c.out.assign(target.begin(), target.end());  // residual
  const std::size_t m = c.active.size();
  if (m == 0) return c.out;

  auto row = [&](std::size_t i) { return std::span<const double>(c.tokens).subspan(i * d, d); };
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> pooled(d, 0.0);

  if (mode == PoolingMode::kSelfAttention) {
    c.sq.assign(m * d, 0.0);
    c.sk.assign(m * d, 0.0);
    c.sv.assign(m * d, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      const auto e = row(c.active[a]);
      vec_mat(e, params.w_q, std::span<double>(c.sq).subspan(a * d, d));
      vec_mat(e, params.w_k, std::span<double>(c.sk).subspan(a * d, d));
      vec_mat(e, params.w_v, std::span<double>(c.sv).subspan(a * d, d));
    }
    c.attn.assign(m * m, 0.0);
    c.heads.assign(m * d, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      auto ra = std::span<double>(c.attn).subspan(a * m, m);
      for (std::size_t b = 0; b < m; ++b) {
        ra[b] = dot(std::span<const double>(c.sq).subspan(a * d, d),
                    std::span<const double>(c.sk).subspan(b * d, d)) * inv_sqrt_d;
      }
      softmax_inplace(ra);
      for (std::size_t b = 0; b < m; ++b) {
        for (std::size_t j = 0; j < d; ++j) c.heads[a * d + j] += ra[b] * c.sv[b * d + j];
      }
      for (std::size_t b = 0; b < m; ++b) c.weights[c.active[b]] += ra[b] / static_cast<double>(m);
    }
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t j = 0; j < d; ++j) pooled[j] += c.heads[a * d + j] / static_cast<double>(m);
    }
  } else {
    if (mode == PoolingMode::kCrossAttention) {
      c.q.assign(d, 0.0);
      vec_mat(target, params.w_q, c.q);
      c.u.assign(d, 0.0);
      mat_vec(params.w_k, c.q, c.u);
      std::vector<double> scores(m);
      for (std::size_t a = 0; a < m; ++a) scores[a] = dot(row(c.active[a]), c.u) * inv_sqrt_d;
      softmax_inplace(scores);
      for (std::size_t a = 0; a < m; ++a) c.weights[c.active[a]] = scores[a];
    } else {
      for (std::size_t i : c.active) c.weights[i] = 1.0 / static_cast<double>(m);
    }
    c.mixed.assign(d, 0.0);
    for (std::size_t i : c.active) {
      const auto e = row(i);
      for (std::size_t j = 0; j < d; ++j) c.mixed[j] += c.weights[i] * e[j];
    }
    vec_mat(c.mixed, params.w_v, pooled);
  }
  for (std::size_t j = 0; j < d; ++j) c.out[j] += pooled[j];
  return c.out;
}

void pool_route_backward(const PoolCache& c, std::span<const double> g_out,
                         const LevelParams& params, LevelParams& grads,
                         std::span<double> g_target, std::span<double> g_tokens) {
  const std::size_t d = c.d;
  for (std::size_t j = 0; j < d; ++j) g_target[j] += g_out[j];  // residual
  const std::size_t m = c.active.size();
  if (m == 0) return;

  auto row = [&](std::size_t i) { return std::span<const double>(c.tokens).subspan(i * d, d); };
  auto g_row = [&](std::size_t i) { return g_tokens.subspan(i * d, d); };
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  if (c.mode == PoolingMode::kSelfAttention) {
    const double inv_m = 1.0 / static_cast<double>(m);
    std::vector<double> g_sq(m * d, 0.0), g_sk(m * d, 0.0), g_sv(m * d, 0.0);
    std::vector<double> g_a(m);
    for (std::size_t a = 0; a < m; ++a) {
      // d(out)/d(heads_a) = 1/m
      const auto ra = std::span<const double>(c.attn).subspan(a * m, m);
      for (std::size_t b = 0; b < m; ++b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          s += g_out[j] * inv_m * c.sv[b * d + j];
          g_sv[b * d + j] += ra[b] * g_out[j] * inv_m;
        }
        g_a[b] = s;
      }
      const double mean = dot(ra, g_a);
      for (std::size_t b = 0; b < m; ++b) {
        const double g_s = ra[b] * (g_a[b] - mean) * inv_sqrt_d;
        for (std::size_t j = 0; j < d; ++j) {
          g_sq[a * d + j] += g_s * c.sk[b * d + j];
          g_sk[b * d + j] += g_s * c.sq[a * d + j];
        }
      }
    }
    for (std::size_t a = 0; a < m; ++a) {
      const std::size_t i = c.active[a];
      const auto e = row(i);
      auto ge = g_row(i);
      vec_mat_backward(e, params.w_q, std::span<const double>(g_sq).subspan(a * d, d), grads.w_q, ge);
      vec_mat_backward(e, params.w_k, std::span<const double>(g_sk).subspan(a * d, d), grads.w_k, ge);
      vec_mat_backward(e, params.w_v, std::span<const double>(g_sv).subspan(a * d, d), grads.w_v, ge);
    }
    return;
  }

  // pooled = mixed W_V
  std::vector<double> g_mixed(d, 0.0);
  vec_mat_backward(c.mixed, params.w_v, g_out, grads.w_v, g_mixed);
  for (std::size_t i : c.active) {
    auto ge = g_row(i);
    for (std::size_t j = 0; j < d; ++j) ge[j] += c.weights[i] * g_mixed[j];
  }
  if (c.mode != PoolingMode::kCrossAttention) return;

  // mixed = sum_i a_i e_i, a = softmax(e_i . u / sqrt(d))
  double mean = 0.0;
  std::vector<double> g_w(c.n, 0.0);
  for (std::size_t i : c.active) {
    g_w[i] = dot(row(i), g_mixed);
    mean += c.weights[i] * g_w[i];
  }
  std::vector<double> g_u(d, 0.0);
  for (std::size_t i : c.active) {
    const double g_s = c.weights[i] * (g_w[i] - mean) * inv_sqrt_d;
    const auto e = row(i);
    auto ge = g_row(i);
    for (std::size_t j = 0; j < d; ++j) {
      ge[j] += g_s * c.u[j];
      g_u[j] += g_s * e[j];
    }
  }
  // u = W_K q
  std::vector<double> g_q(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t j = 0; j < d; ++j) {
      grads.w_k.at(a, j) += g_u[a] * c.q[j];
      g_q[j] += params.w_k.at(a, j) * g_u[a];
    }
  }
  // q = target W_Q
  vec_mat_backward(c.target, params.w_q, g_q, grads.w_q, g_target);
}

// ---------------------------------------------------------------------------
// Gated fusion

std::vector<double> gated_fusion(std::span<const double> inputs, std::size_t m,
                                 const Tensor& w, const Tensor& b, FusionCache* cache) {
  SIDFLOW_CHECK(m >= 1 && inputs.size() % m == 0 && w.rows == m && w.cols == inputs.size() &&
                    b.cols == m,
                ErrorKind::kInvalidArgument, "gated_fusion: shape mismatch");
  FusionCache local;
  FusionCache& c = cache ? *cache : local;
  c.m = m;
  c.d = inputs.size() / m;
  c.inputs.assign(inputs.begin(), inputs.end());
  c.weights.assign(m, 0.0);
  mat_vec(w, inputs, c.weights);
  for (std::size_t k = 0; k < m; ++k) c.weights[k] += b.data[k];
  softmax_inplace(c.weights);
  c.out.assign(c.d, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < c.d; ++j) c.out[j] += c.weights[k] * inputs[k * c.d + j];
  }
  return c.out;
}

void gated_fusion_backward(const FusionCache& c, std::span<const double> g_out,
                           const Tensor& w, Tensor& g_w, Tensor& g_b,
                           std::span<double> g_inputs) {
  const std::size_t m = c.m;
  const std::size_t d = c.d;
  std::vector<double> g_alpha(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto in = std::span<const double>(c.inputs).subspan(k * d, d);
    g_alpha[k] = dot(in, g_out);
    for (std::size_t j = 0; j < d; ++j) g_inputs[k * d + j] += c.weights[k] * g_out[j];
  }
  const double mean = dot(c.weights, g_alpha);
  for (std::size_t k = 0; k < m; ++k) {
    const double g_s = c.weights[k] * (g_alpha[k] - mean);
    g_b.data[k] += g_s;
    double* grow = g_w.data.data() + k * w.cols;
    const double* wrow = w.data.data() + k * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) {
      grow[j] += g_s * c.inputs[j];
      g_inputs[j] += g_s * wrow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Whole model

ModelInput make_input(UserId user, ItemId target, const MultiRouteResult& routes,
                      std::size_t k_max) {
  ModelInput in{user, target, {}};
  const std::array<const RouteResult*, 3> rs = {&routes.target, &routes.recent, &routes.global};
  for (std::size_t r = 0; r < 3; ++r) {
    const auto& entries = rs[r]->entries;
    const std::size_t n = std::min(k_max, entries.size());
    for (std::size_t i = 0; i < n; ++i) in.routes[r].push_back(entries[i].item);
  }
  return in;
}

namespace {

const Tensor& level_table(const ModelParams& p, std::size_t level) {
  return level == 0 ? p.item_emb : p.sid_emb[level - 1];
}

Tensor& level_table(ModelParams& p, std::size_t level) {
  return level == 0 ? p.item_emb : p.sid_emb[level - 1];
}

std::size_t level_row(const SidMap& sids, std::size_t level, ItemId item) {
  if (item == kPaddingItem) return 0;
  return level == 0 ? item : std::size_t{sids[item][level - 1]} + 1;
}

}  // namespace

double forward(const ModelParams& params, const ModelConfig& config, const ModelInput& input,
               const SidMap& sids, ForwardTrace* trace) {
  const std::size_t d = config.d_model;
  const std::size_t levels = config.n_levels();
  const std::size_t k_max = config.k_max;

  SIDFLOW_CHECK(input.user >= 1 && input.user <= config.n_users, ErrorKind::kInvalidArgument,
                "forward: unknown user id " + std::to_string(input.user));
  auto check_item = [&](ItemId item) {
    SIDFLOW_CHECK(item >= 1 && item <= config.n_items && sids.contains(item),
                  ErrorKind::kInvalidArgument, "forward: unknown item id " + std::to_string(item));
    for (std::size_t l = 1; l < levels; ++l) {
      SIDFLOW_CHECK(sids[item][l - 1] < config.codebook_size, ErrorKind::kInvalidArgument,
                    "forward: item " + std::to_string(item) + " has a code outside the codebook");
    }
  };
  check_item(input.target);
  for (const auto& route : input.routes) {
    for (ItemId item : route) check_item(item);
  }
  SIDFLOW_CHECK(levels == 1 || sids.n_levels() >= config.n_sid_levels,
                ErrorKind::kInvalidArgument, "forward: sid map has fewer levels than the model");

  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t.user = input.user;
  t.target = input.target;
  t.levels.resize(levels);

  std::vector<double> level_outputs(levels * d);
  std::vector<double> tokens(k_max * d);
  std::vector<std::uint8_t> mask(k_max);
  for (std::size_t l = 0; l < levels; ++l) {
    LevelTrace& lt = t.levels[l];
    const Tensor& table = level_table(params, l);
    lt.target_row = level_row(sids, l, input.target);
    const auto target_vec = table.row(lt.target_row);

    std::vector<double> route_outputs(3 * d);
    for (std::size_t r = 0; r < 3; ++r) {
      auto& rows = lt.token_rows[r];
      rows.assign(k_max, 0);
      std::fill(mask.begin(), mask.end(), 0);
      const auto& items = input.routes[r];
      for (std::size_t i = 0; i < std::min(k_max, items.size()); ++i) {
        rows[i] = level_row(sids, l, items[i]);
        mask[i] = 1;
      }
      for (std::size_t i = 0; i < k_max; ++i) {
        const auto src = table.row(rows[i]);
        std::copy(src.begin(), src.end(), tokens.begin() + i * d);
      }
      const auto pooled = pool_route(target_vec, tokens, mask, params.levels[l],
                                     config.pooling, &lt.pools[r]);
      std::copy(pooled.begin(), pooled.end(), route_outputs.begin() + r * d);
    }
    const auto fused = gated_fusion(route_outputs, 3, params.levels[l].route_gate_w,
                                    params.levels[l].route_gate_b, &lt.route);
    std::copy(fused.begin(), fused.end(), level_outputs.begin() + l * d);
  }
  const auto interest =
      gated_fusion(level_outputs, levels, params.level_gate_w, params.level_gate_b, &t.level);

  std::vector<double> x(interest.begin(), interest.end());
  const auto item_vec = params.item_emb.row(input.target);
  const auto user_vec = params.user_emb.row(input.user);
  x.insert(x.end(), item_vec.begin(), item_vec.end());
  x.insert(x.end(), user_vec.begin(), user_vec.end());

  const std::size_t n_layers = params.mlp_w.size();
  t.activations.assign(1, std::move(x));
  t.preacts.clear();
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    const Tensor& w = params.mlp_w[layer];
    std::vector<double> z(w.rows);
    mat_vec(w, t.activations.back(), z);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += params.mlp_b[layer].data[k];
    t.preacts.push_back(z);
    if (layer + 1 < n_layers) {
      for (double& v : z) v = std::max(v, 0.0);
      t.activations.push_back(std::move(z));
    }
  }
  const auto& logits = t.preacts.back();
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx);
  const double e1 = std::exp(logits[1] - mx);
  t.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  return t.probs[1];
}

double example_loss(const ForwardTrace& trace, int label) {
  const auto& z = trace.preacts.back();
  const double mx = std::max(z[0], z[1]);
  const double lse = mx + std::log(std::exp(z[0] - mx) + std::exp(z[1] - mx));
  return lse - z[label == 1 ? 1 : 0];
}

void backward(const ModelParams& params, const ModelConfig& config, const ForwardTrace& t,
              int label, double scale, ModelParams& grads) {
  const std::size_t d = config.d_model;
  const std::size_t levels = config.n_levels();
  const std::size_t n_layers = params.mlp_w.size();

  // Head.
  std::vector<double> g_z = {scale * t.probs[0], scale * t.probs[1]};
  g_z[label == 1 ? 1 : 0] -= scale;
  std::vector<double> g_x;
  for (std::size_t layer = n_layers; layer-- > 0;) {
    const Tensor& w = params.mlp_w[layer];
    const auto& in = t.activations[layer];
    std::vector<double> g_in(w.cols, 0.0);
    for (std::size_t k = 0; k < w.rows; ++k) {
      grads.mlp_b[layer].data[k] += g_z[k];
      const double* wrow = w.data.data() + k * w.cols;
      double* grow = grads.mlp_w[layer].data.data() + k * w.cols;
      for (std::size_t j = 0; j < w.cols; ++j) {
        grow[j] += g_z[k] * in[j];
        g_in[j] += wrow[j] * g_z[k];
      }
    }
    if (layer == 0) {
      g_x = std::move(g_in);
    } else {
      const auto& pre = t.preacts[layer - 1];
      for (std::size_t j = 0; j < g_in.size(); ++j) {
        if (pre[j] <= 0.0) g_in[j] = 0.0;
      }
      g_z = std::move(g_in);
    }
  }
  {
    auto gi = grads.item_emb.row(t.target);
    auto gu = grads.user_emb.row(t.user);
    for (std::size_t j = 0; j < d; ++j) {
      gi[j] += g_x[d + j];
      gu[j] += g_x[2 * d + j];
    }
  }

  // Level fusion.
  std::vector<double> g_levels(levels * d, 0.0);
  gated_fusion_backward(t.level, std::span<const double>(g_x).subspan(0, d), params.level_gate_w,
                        grads.level_gate_w, grads.level_gate_b, g_levels);

  std::vector<double> g_routes(3 * d);
  std::vector<double> g_target(d);
  std::vector<double> g_tokens(config.k_max * d);
  for (std::size_t l = 0; l < levels; ++l) {
    const LevelTrace& lt = t.levels[l];
    std::fill(g_routes.begin(), g_routes.end(), 0.0);
    gated_fusion_backward(lt.route, std::span<const double>(g_levels).subspan(l * d, d),
                          params.levels[l].route_gate_w, grads.levels[l].route_gate_w,
                          grads.levels[l].route_gate_b, g_routes);
    std::fill(g_target.begin(), g_target.end(), 0.0);
    Tensor& g_table = level_table(grads, l);
    for (std::size_t r = 0; r < 3; ++r) {
      std::fill(g_tokens.begin(), g_tokens.end(), 0.0);
      pool_route_backward(lt.pools[r], std::span<const double>(g_routes).subspan(r * d, d),
                          params.levels[l], grads.levels[l], g_target, g_tokens);
      const auto& pool = lt.pools[r];
      for (std::size_t i : pool.active) {
        auto g_row = g_table.row(lt.token_rows[r][i]);
        for (std::size_t j = 0; j < d; ++j) g_row[j] += g_tokens[i * d + j];
      }
    }
    auto g_row = g_table.row(lt.target_row);
    for (std::size_t j = 0; j < d; ++j) g_row[j] += g_target[j];
  }
}

double bce_loss(std::span<const double> preds, std::span<const std::uint8_t> labels) {
  SIDFLOW_CHECK(preds.size() == labels.size() && !preds.empty(), ErrorKind::kInvalidArgument,
                "bce_loss: predictions and labels must be non-empty and the same length");
  constexpr double kEps = 1e-12;
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds[i], kEps, 1.0 - kEps);
    total -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  SIDFLOW_CHECK(out, ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  io::write_magic(out, "R2LC");
  io::write_le<std::uint16_t>(out, kCheckpointVersion);

  const ModelConfig& m = ck.model;
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_users));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_items));
  io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(m.n_sid_levels));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.codebook_size));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.d_model));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.k_max));
  io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(m.hidden.size()));
  for (std::size_t h : m.hidden) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.pooling));
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.features));

  const RetrievalConfig& r = ck.retrieval;
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.k));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.w));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.n));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.hash_bits));
  io::write_le<double>(out, r.tau);
  io::write_le<std::uint8_t>(out, r.disable_sid_retrieval ? 1 : 0);
  io::write_le<std::uint8_t>(out, r.disable_id_fill ? 1 : 0);
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.score_mode));
  io::write_le<std::uint64_t>(out, ck.hasher_seed);

  std::uint32_t count = 0;
  ck.params.for_each([&](const std::string&, const Tensor&) { ++count; });
  io::write_le<std::uint32_t>(out, count);
  ck.params.for_each([&](const std::string& name, const Tensor& t) {
    io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    for (double v : t.data) io::write_le<double>(out, v);
  });
  SIDFLOW_CHECK(out, ErrorKind::kIo, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SIDFLOW_CHECK(in, ErrorKind::kIo, "cannot open checkpoint " + path.string());
  const std::string name = path.string();
  io::expect_magic(in, "R2LC", name);
  const auto version = io::read_le<std::uint16_t>(in, name);
  SIDFLOW_CHECK(version == kCheckpointVersion, ErrorKind::kData,
                name + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ModelConfig& m = ck.model;
  m.n_users = io::read_le<std::uint32_t>(in, name);
  m.n_items = io::read_le<std::uint32_t>(in, name);
  m.n_sid_levels = io::read_le<std::uint16_t>(in, name);
  m.codebook_size = io::read_le<std::uint32_t>(in, name);
  m.d_model = io::read_le<std::uint32_t>(in, name);
  m.k_max = io::read_le<std::uint32_t>(in, name);
  m.hidden.resize(io::read_le<std::uint16_t>(in, name));
  for (auto& h : m.hidden) h = io::read_le<std::uint32_t>(in, name);
  const auto pooling = io::read_le<std::uint8_t>(in, name);
  const auto features = io::read_le<std::uint8_t>(in, name);
  SIDFLOW_CHECK(pooling <= 2 && features <= 1, ErrorKind::kData, name + ": bad model mode");
  m.pooling = static_cast<PoolingMode>(pooling);
  m.features = static_cast<FeatureMode>(features);

  RetrievalConfig& r = ck.retrieval;
  r.k = io::read_le<std::uint32_t>(in, name);
  r.w = io::read_le<std::uint32_t>(in, name);
  r.n = io::read_le<std::uint32_t>(in, name);
  r.hash_bits = io::read_le<std::uint32_t>(in, name);
  r.tau = io::read_le<double>(in, name);
  r.disable_sid_retrieval = io::read_le<std::uint8_t>(in, name) != 0;
  r.disable_id_fill = io::read_le<std::uint8_t>(in, name) != 0;
  const auto score_mode = io::read_le<std::uint8_t>(in, name);
  SIDFLOW_CHECK(score_mode <= 1, ErrorKind::kData, name + ": bad score mode");
  r.score_mode = static_cast<ScoreMode>(score_mode);
  ck.hasher_seed = io::read_le<std::uint64_t>(in, name);

  try {
    m.validate();
    r.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kData, name + ": " + e.what());
  }

  // The manifest must match the tensors the config implies, name by name.
  ck.params = ModelParams::zeros(m);
  std::uint32_t expected = 0;
  ck.params.for_each([&](const std::string&, Tensor&) { ++expected; });
  const auto count = io::read_le<std::uint32_t>(in, name);
  SIDFLOW_CHECK(count == expected, ErrorKind::kData,
                name + ": tensor count " + std::to_string(count) + " does not match config (" +
                    std::to_string(expected) + ")");
  ck.params.for_each([&](const std::string& want, Tensor& t) {
    const auto len = io::read_le<std::uint16_t>(in, name);
    std::string got(len, '\0');
    in.read(got.data(), len);
    SIDFLOW_CHECK(in && got == want, ErrorKind::kData,
                  name + ": expected tensor '" + want + "', found '" + got + "'");
    const auto rows = io::read_le<std::uint32_t>(in, name);
    const auto cols = io::read_le<std::uint32_t>(in, name);
    SIDFLOW_CHECK(rows == t.rows && cols == t.cols, ErrorKind::kData,
                  name + ": tensor '" + want + "' has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", expected " + std::to_string(t.rows) + "x" +
                      std::to_string(t.cols));
    for (auto& v : t.data) {
      v = io::read_le<double>(in, name);
      SIDFLOW_CHECK(std::isfinite(v), ErrorKind::kData,
                    name + ": non-finite value in tensor '" + want + "'");
    }
  });
  SIDFLOW_CHECK(in.peek() == std::char_traits<char>::eof(), ErrorKind::kData,
                name + ": trailing bytes after the last tensor");
  return ck;
}

}  // namespace sidflow
