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

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace npf {

/// One regression episode on a scalar time axis. Outputs are stored row-major
/// with `y_dim` values per input.
struct Task {
  std::vector<double> x_context;
  std::vector<double> y_context;
  std::vector<double> x_target;
  std::vector<double> y_target;
  std::size_t y_dim = 1;

  std::string tag;
  std::map<std::string, double> params;

  std::size_t num_context() const { return x_context.size(); }
  std::size_t num_target() const { return x_target.size(); }

  std::span<const double> y_context_row(std::size_t i) const {
    return {y_context.data() + i * y_dim, y_dim};
  }
  std::span<const double> y_target_row(std::size_t i) const {
    return {y_target.data() + i * y_dim, y_dim};
  }

  /// Column `d` of y_context / y_target.
  std::vector<double> y_context_column(std::size_t d) const;
  std::vector<double> y_target_column(std::size_t d) const;

  /// Throws ContractViolation when sizes disagree or the context is empty.
  void validate() const;

  bool operator==(const Task&) const = default;
};

}  // namespace npf
