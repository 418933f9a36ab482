// Copyright 2026 The npf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Adam, the step-decay learning-rate schedule and the resumable training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "npf/datagen.hpp"
#include "npf/layers.hpp"
#include "npf/losses.hpp"
#include "npf/models.hpp"

namespace npf::training {

struct TrainConfig {
  std::uint64_t total_batches = 600000;
  std::uint64_t batch_size = 256;
  double lr = 1e-3;
  double gamma = 0.995;
  std::uint64_t decay_every = 1000;
  std::uint64_t train_samples = 1;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 100;
  std::uint64_t checkpoint_every = 5000;

  /// 20000 batches of 64 with decay every 200 batches.
  static TrainConfig desk_scale();
  void validate() const;
  /// lr * gamma^floor(batches_done / decay_every)
  double lr_at(std::uint64_t batches_done) const;
};

struct OptimState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static OptimState zeros(const nn::ParameterSet& params);
};

/// One bias-corrected Adam update from the accumulated Parameter::grad.
void adam_step(nn::ParameterSet& params, OptimState& state, double lr);

/// Mean training loss over `tasks`; gradients of that mean are accumulated
/// into the parameters' grad (which are zeroed first). Throws TrainingAborted
/// on a non-finite task loss.
double batch_loss_and_grad(models::Model& model, std::span<const Task> tasks, Rng& rng);

struct LossRecord {
  std::uint64_t batch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  /// Directory for loss_log.jsonl and checkpoint.bin. Empty: keep everything in memory.
  std::filesystem::path output_dir;
  /// Continue from output_dir/checkpoint.bin when present.
  bool resume = true;
  std::function<void(const LossRecord&)> on_log;
};

struct TrainResult {
  std::vector<LossRecord> log;
  std::uint64_t batches_done = 0;
  std::uint64_t resumed_from = 0;
};

inline constexpr const char* kLossLogFile = "loss_log.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

/// Trains for config.total_batches. Each logged record holds the mean batch
/// loss over the preceding log_every batches.
TrainResult train_run(models::Model& model, const datagen::TaskSource& source,
                      const TrainConfig& config, const TrainOptions& options = {});

std::vector<LossRecord> read_loss_log(const std::filesystem::path& path);

}  // namespace npf::training
