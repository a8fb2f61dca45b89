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

// Optimisation of the refinement model: batched BCE steps with Adam, the
// one-pass training loop over retrieved instances, and a finite-difference
// gradient check.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sidflow/behavior_store.hpp"
#include "sidflow/model.hpp"

namespace sidflow {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 7;
  // Steps between re-hashing item signatures from the ID embeddings;
  // 0 re-hashes once at the start of every epoch.
  std::size_t resig_interval = 0;

  void validate() const;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static AdamState for_config(const ModelConfig& config);
};

struct Example {
  ModelInput input;
  int label = 0;
};

/// One forward/backward pass over the batch and an Adam update. Returns the
/// mean loss before the update. Throws kNumeric on a non-finite loss.
double train_step(std::span<const Example> batch, ModelParams& params, AdamState& adam,
                  const ModelConfig& model, const SidMap& sids, const TrainConfig& config);

/// SimHash signatures of every row of the item-ID embedding table.
SignatureTable item_signatures(const ModelParams& params, std::size_t bits, std::uint64_t seed);

/// Stage-1 for one instance, truncated to the model's route length.
ModelInput build_input(const BehaviorStore& store, const Instance& instance, const SidMap& sids,
                       const SignatureTable* signatures, const RetrievalConfig& retrieval,
                       std::size_t k_max);

struct TrainProgress {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::size_t examples = 0;
  double loss = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> step_losses;
};

/// Initialises from derive_seed(seed, "init"), shuffles each epoch with the
/// "data" stream and hashes with the "hasher" stream.
TrainResult train(const BehaviorStore& store, std::span<const Instance> instances,
                  const SidMap& sids, const ModelConfig& model, const RetrievalConfig& retrieval,
                  const TrainConfig& config,
                  const std::function<void(const TrainProgress&)>& on_step = {});

struct GradientCheck {
  double max_rel_error = 0.0;
  std::map<std::string, double> per_tensor;  // max relative error per tensor
  std::size_t checked = 0;
};

/// Central differences of -log p_label against the analytic gradient for
/// every scalar parameter. The relative error is |a - n| / max(|a| + |n|, 1e-6).
/// Throws kInvalidArgument for epsilon <= 0.
GradientCheck gradient_check(const ModelParams& params, const ModelConfig& model,
                             const ModelInput& input, const SidMap& sids, int label,
                             double epsilon = 1e-5);

}  // namespace sidflow
