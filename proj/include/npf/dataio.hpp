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

// Real-data ingestion: hourly city temperatures and the Hudson's Bay
// lynx-hare pelt table.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "npf/datagen.hpp"
#include "npf/task.hpp"

namespace npf::dataio {

using Rng = std::mt19937_64;

enum class Split { train, test };
std::string to_string(Split s);

struct CitySeries {
  std::string name;
  Split split = Split::train;
  /// Normalised hourly values after cropping and gap filling.
  std::vector<double> values;
  double mean = 0.0;
  double std = 1.0;
};

/// Cities held out for testing; everything else trains.
bool is_test_city(const std::string& name);

/// Linear interpolation across interior NaN runs; leading and trailing NaNs
/// are dropped. Returns an empty vector when every value is missing.
std::vector<double> crop_and_fill(const std::vector<double>& raw);

/// CSV with a datetime column followed by one column per city. Empty, "nan"
/// or "NaN" cells are missing. Cities with no values are skipped and named
/// in `warnings`.
std::vector<CitySeries> load_temperature_csv(const std::filesystem::path& path,
                                             std::vector<std::string>* warnings = nullptr);

enum class TemperatureMode { interpolation, extrapolation };
std::string to_string(TemperatureMode m);

inline constexpr std::size_t kTemperatureWindow = 720;
inline constexpr double kTemperatureSpan = 3.0;

/// Time of hour i within a window: (i + 0.5) * 3 / 720, strictly inside (0, 3).
double window_time(std::size_t hour);

/// Random 720-hour window; N ~ U{20..99}, M ~ U{N..99}. Interpolation draws
/// N + M distinct hours and, with `join_context`, also scores the context.
/// Extrapolation takes context from the first half and targets from the second.
Task make_temperature_task(const CitySeries& series, TemperatureMode mode, Rng& rng,
                           bool join_context = false);

/// Uniform city from `split`, then make_temperature_task.
datagen::TaskSource temperature_source(std::vector<CitySeries> cities, Split split,
                                       TemperatureMode mode, bool join_context = false);

// ---------------------------------------------------------------- lynx-hare

struct LynxHare {
  std::vector<double> years;
  std::vector<double> hare;
  std::vector<double> lynx;
  std::size_t size() const { return years.size(); }
};

/// Columns year, hare, lynx (header required, any order).
LynxHare load_lynx_hare(const std::filesystem::path& path);

/// Mean scaled population (both species, all events) and mean scaled duration
/// of accepted simulations.
struct PopulationReference {
  double mean_population = 0.0;
  double mean_duration = 0.0;
  std::size_t simulations = 0;
};

PopulationReference estimate_population_reference(std::size_t simulations, std::uint64_t seed);

/// Series rescaled to the simulated ranges: time spans [0, mean_duration]
/// and the mean of both species equals mean_population. y = (lynx, hare).
struct PopulationSeries {
  std::vector<double> x;
  std::vector<double> y;
  double time_scale = 1.0;
  double population_scale = 1.0;
  std::size_t size() const { return x.size(); }
};

PopulationSeries normalize_lynx_hare(const LynxHare& data, const PopulationReference& ref);

/// Points [first, first + length) are the targets, everything else is context.
Task lynx_hare_contiguous_task(const PopulationSeries& series, std::size_t first, std::size_t length);

/// N ~ U{3..size/2} random context points; the remaining points are targets.
Task lynx_hare_random_task(const PopulationSeries& series, Rng& rng);

}  // namespace npf::dataio
