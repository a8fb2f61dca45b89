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

#include "sidflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sidflow {

void TrainConfig::validate() const {
  SIDFLOW_CHECK(learning_rate >= 0.0 && std::isfinite(learning_rate),
                ErrorKind::kInvalidArgument, "train config: learning rate must be >= 0");
  SIDFLOW_CHECK(batch_size >= 1, ErrorKind::kInvalidArgument,
                "train config: batch size must be >= 1");
  SIDFLOW_CHECK(epochs >= 1, ErrorKind::kInvalidArgument, "train config: epochs must be >= 1");
  SIDFLOW_CHECK(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0,
                ErrorKind::kInvalidArgument, "train config: invalid Adam constants");
}

AdamState AdamState::for_config(const ModelConfig& config) {
  return AdamState{ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

namespace {

void adam_update(ModelParams& params, const ModelParams& grads, AdamState& adam,
                 const TrainConfig& config) {
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;

  std::vector<Tensor*> p, m, v;
  std::vector<const Tensor*> g;
  params.for_each([&](const std::string&, Tensor& x) { p.push_back(&x); });
  adam.m.for_each([&](const std::string&, Tensor& x) { m.push_back(&x); });
  adam.v.for_each([&](const std::string&, Tensor& x) { v.push_back(&x); });
  grads.for_each([&](const std::string&, const Tensor& x) { g.push_back(&x); });

  for (std::size_t k = 0; k < p.size(); ++k) {
    auto& pd = p[k]->data;
    auto& md = m[k]->data;
    auto& vd = v[k]->data;
    const auto& gd = g[k]->data;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      md[i] = config.beta1 * md[i] + (1.0 - config.beta1) * gd[i];
      vd[i] = config.beta2 * vd[i] + (1.0 - config.beta2) * gd[i] * gd[i];
      pd[i] -= lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + config.epsilon);
    }
  }
}

}  // namespace

double train_step(std::span<const Example> batch, ModelParams& params, AdamState& adam,
                  const ModelConfig& model, const SidMap& sids, const TrainConfig& config) {
  SIDFLOW_CHECK(!batch.empty(), ErrorKind::kInvalidArgument, "train_step: empty batch");
  ModelParams grads = ModelParams::zeros(model);
  ForwardTrace trace;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    forward(params, model, ex.input, sids, &trace);
    loss += example_loss(trace, ex.label);
    backward(params, model, trace, ex.label, scale, grads);
  }
  loss *= scale;
  if (!std::isfinite(loss)) {
    fail(ErrorKind::kNumeric, "train_step: non-finite loss at step " +
                                  std::to_string(adam.step + 1) + " (batch of " +
                                  std::to_string(batch.size()) + ", first user " +
                                  std::to_string(batch.front().input.user) + ")");
  }
  adam_update(params, grads, adam, config);
  return loss;
}

SignatureTable item_signatures(const ModelParams& params, std::size_t bits, std::uint64_t seed) {
  const Hasher hasher(bits, params.item_emb.cols, seed);
  return SignatureTable(params.item_emb.data, params.item_emb.rows, hasher);
}

ModelInput build_input(const BehaviorStore& store, const Instance& instance, const SidMap& sids,
                       const SignatureTable* signatures, const RetrievalConfig& retrieval,
                       std::size_t k_max) {
  const HistoryView history = store.history(instance);
  const MultiRouteResult routes =
      retrieve_all(history.items, sids, signatures, instance.target, retrieval);
  return make_input(instance.user, instance.target, routes, k_max);
}

TrainResult train(const BehaviorStore& store, std::span<const Instance> instances,
                  const SidMap& sids, const ModelConfig& model, const RetrievalConfig& retrieval,
                  const TrainConfig& config,
                  const std::function<void(const TrainProgress&)>& on_step) {
  config.validate();
  model.validate();
  retrieval.validate();
  SIDFLOW_CHECK(!instances.empty(), ErrorKind::kData, "train: no training instances");
  SIDFLOW_CHECK(model.k_max >= retrieval.k_max(), ErrorKind::kInvalidArgument,
                "train: model k_max is shorter than K + N");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.model = model;
  ck.retrieval = retrieval;
  ck.hasher_seed = derive_seed(config.seed, "hasher");
  ck.params = init_params(model, derive_seed(config.seed, "init"));

  AdamState adam = AdamState::for_config(model);
  Rng data_rng(derive_seed(config.seed, "data"));
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  SignatureTable signatures;
  std::vector<Example> batch;
  batch.reserve(config.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    data_rng.shuffle(order);
    signatures = item_signatures(ck.params, retrieval.hash_bits, ck.hasher_seed);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      if (config.resig_interval > 0 && step > 0 && step % config.resig_interval == 0) {
        signatures = item_signatures(ck.params, retrieval.hash_bits, ck.hasher_seed);
      }
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const Instance& inst = instances[order[i]];
        batch.push_back(Example{
            build_input(store, inst, sids, &signatures, retrieval, model.k_max), inst.label});
      }
      const double loss = train_step(batch, ck.params, adam, model, sids, config);
      result.step_losses.push_back(loss);
      ++step;
      if (on_step) on_step(TrainProgress{epoch, step, end, loss});
    }
  }
  return result;
}

GradientCheck gradient_check(const ModelParams& params, const ModelConfig& model,
                             const ModelInput& input, const SidMap& sids, int label,
                             double epsilon) {
  SIDFLOW_CHECK(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::kInvalidArgument,
                "gradient_check: epsilon must be a positive finite step");
  ForwardTrace trace;
  forward(params, model, input, sids, &trace);
  ModelParams grads = ModelParams::zeros(model);
  backward(params, model, trace, label, 1.0, grads);

  ModelParams probe = params;
  auto loss_at = [&]() {
    ForwardTrace t;
    forward(probe, model, input, sids, &t);
    return example_loss(t, label);
  };

  std::vector<const Tensor*> analytic;
  grads.for_each([&](const std::string&, const Tensor& t) { analytic.push_back(&t); });

  GradientCheck out;
  std::size_t k = 0;
  probe.for_each([&](const std::string& name, Tensor& t) {
    const Tensor& g = *analytic[k++];
    double worst = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + epsilon;
      const double up = loss_at();
      t.data[i] = saved - epsilon;
      const double down = loss_at();
      t.data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = g.data[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      worst = std::max(worst, rel);
      ++out.checked;
    }
    out.per_tensor[name] = worst;
    out.max_rel_error = std::max(out.max_rel_error, worst);
  });
  return out;
}

}  // namespace sidflow
