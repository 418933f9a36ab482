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

// Checkpoint file: a one-line JSON manifest after a magic line, followed by
// the raw little-endian float64 arrays it describes (parameters, then the
// Adam first and second moments when present).

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "npf/autodiff.hpp"
#include "npf/models.hpp"
#include "npf/training.hpp"

namespace npf::checkpoint {

inline constexpr int kFormatVersion = 1;

struct CheckpointData {
  int version = kFormatVersion;
  models::ModelConfig config;
  std::uint64_t batch = 0;
  std::string rng_state;
  std::vector<ad::Parameter> params;
  std::optional<training::OptimState> optimizer;
  std::map<std::string, std::string> meta;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const models::Model& model,
                     const training::OptimState* optimizer, std::uint64_t batch,
                     const std::string& rng_state,
                     const std::map<std::string, std::string>& meta = {});

/// Throws IncompatibleCheckpoint on a bad magic line, version or size.
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `model`; names and shapes must match.
void restore_parameters(models::Model& model, const CheckpointData& data);

/// Builds the stored architecture and restores its parameters.
std::unique_ptr<models::Model> load_model(const std::filesystem::path& path);

std::string config_to_json(const models::ModelConfig& config);
models::ModelConfig config_from_json(const std::string& text);

}  // namespace npf::checkpoint
