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

// Per-task prediction curves as long-format CSV and standalone SVG.

#include <filesystem>
#include <string>
#include <vector>

#include "npf/eval.hpp"
#include "npf/task.hpp"

namespace npf::plot {

struct PlotData {
  std::string title;
  std::vector<double> x;  // dense evaluation inputs
  std::vector<double> mean;
  std::vector<double> lower;  // mean - 1 sigma of the mixture
  std::vector<double> upper;
  std::vector<std::vector<double>> samples;
  std::vector<double> context_x, context_y;
  std::vector<double> target_x, target_y;
};

/// Mixture mean and +-1 sigma over a dense grid covering the task, plus up to
/// `samples` function draws, for output dimension `dim`.
PlotData build_plot_data(eval::Predictor& predictor, const Task& task, std::size_t dim,
                         std::size_t samples, eval::Rng& rng, std::size_t resolution = 200);

/// Columns: series,x,y with series in {mean, lower, upper, sample_<k>, context, target}.
void write_csv(const std::filesystem::path& path, const PlotData& data);

/// Self-contained SVG line plot (no scripts or external references).
std::string to_svg(const PlotData& data, int width = 640, int height = 360);
void write_svg(const std::filesystem::path& path, const PlotData& data);

}  // namespace npf::plot
