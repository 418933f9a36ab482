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

// Run configuration: a line-oriented key=value file. Unknown keys are
// rejected; every command writes the fully resolved set next to its outputs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "npf/training.hpp"

namespace npf {

/// Bad command line or configuration; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RunConfig {
 public:
  RunConfig();

  /// Parses `key=value` lines; '#' starts a comment.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Throws UsageError for unknown keys or values of the wrong type.
  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const;

  const std::string& str(const std::string& key) const;
  std::uint64_t uint(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::uint64_t> seeds() const;

  /// Desk or full preset, then explicit overrides.
  training::TrainConfig train_config() const;

  /// Every key in a fixed order.
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

  static const std::vector<std::string>& keys();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace npf
