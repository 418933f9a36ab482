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

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <random>
#include <vector>

#include "npf/task.hpp"

namespace npf::test {

using Rng = std::mt19937_64;

inline std::vector<double> uniform(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = u(rng);
  return out;
}

/// Uniform draws with |v| >= gap, for primitives with a kink at zero.
inline std::vector<double> away_from_zero(Rng& rng, std::size_t n, double gap, double hi) {
  std::uniform_real_distribution<double> u(gap, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> out(n);
  for (auto& v : out) v = sign(rng) ? u(rng) : -u(rng);
  return out;
}

/// Small task with the given inputs and smooth outputs.
inline Task make_task(std::vector<double> xc, std::vector<double> xt, std::size_t y_dim = 1) {
  Task t;
  t.y_dim = y_dim;
  t.x_context = std::move(xc);
  t.x_target = std::move(xt);
  for (double x : t.x_context)
    for (std::size_t d = 0; d < y_dim; ++d) t.y_context.push_back(std::sin(2.0 * x + d));
  for (double x : t.x_target)
    for (std::size_t d = 0; d < y_dim; ++d) t.y_target.push_back(std::sin(2.0 * x + d));
  return t;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace npf::test
