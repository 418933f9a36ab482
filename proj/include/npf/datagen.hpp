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

// Synthetic task generators, context/target size rules and the Gillespie
// Lotka-Volterra simulator.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "npf/kernels.hpp"
#include "npf/task.hpp"

namespace npf::datagen {

using Rng = std::mt19937_64;
using TaskSource = std::function<Task(Rng&)>;

/// N ~ U{n_min .. n_max-1}; M ~ U{max(m_floor, N) .. m_max-1}.
struct SamplingRule {
  int n_min = 3;
  int n_max = 100;
  int m_floor = 0;
  int m_max = 100;
  double x_lo = -3.0;
  double x_hi = 3.0;
  bool join_context = true;

  static SamplingRule synthetic();
  static SamplingRule population();

  void validate() const;
  /// Returns (N, M).
  std::pair<std::size_t, std::size_t> draw_sizes(Rng& rng) const;
};

/// Joint noiseless GP prior draw over N+M uniform inputs. Retries with fresh
/// inputs on Cholesky failure, at most 5 attempts.
Task gen_gp_task(const kernels::KernelSpec& spec, const SamplingRule& rule, Rng& rng);

struct FourierSeries {
  double bias = 0.0;
  std::vector<double> amplitudes;  // a_1..a_K
  std::vector<double> phases;      // phi_1..phi_K

  static FourierSeries draw(Rng& rng);
  double operator()(double x) const;
};

Task gen_fourier_task(const SamplingRule& rule, Rng& rng);
Task make_task_from_function(const std::function<double(double)>& f, const SamplingRule& rule,
                             Rng& rng, std::string tag);

/// Piecewise-constant function over [lo, hi] with `values.size() == steps.size() + 1`.
struct StepFunction {
  std::vector<double> steps;
  std::vector<double> values;

  static StepFunction draw(double lo, double hi, Rng& rng);
  double operator()(double x) const;
};

inline constexpr double kMinSegmentWidth = 0.1;
inline constexpr double kMinStepHeight = 0.1;

Task gen_step_task(const SamplingRule& rule, Rng& rng);

// ---------------------------------------------------------------- populations

struct LotkaVolterraRates {
  std::array<double, 4> theta{};  // predator birth, predator death, prey birth, prey death

  static LotkaVolterraRates draw(Rng& rng);
  /// (theta0 X Y, theta1 X, theta2 Y, theta3 X Y)
  std::array<double, 4> event_rates(long predators, long prey) const;
};

inline constexpr std::size_t kSimulationEvents = 10000;
inline constexpr long kPopulationCap = 500;
inline constexpr double kMaxSimulatedTime = 100.0;
inline constexpr double kTimeScale = 0.1;
inline constexpr double kPopulationScale = 0.01;

/// Raw event-level trajectory; times are unscaled, counts are integers.
struct PopulationTrajectory {
  std::vector<double> times;
  std::vector<long> predators;
  std::vector<long> prey;
  LotkaVolterraRates rates;

  std::size_t size() const { return times.size(); }
  std::vector<double> scaled_times() const;
};

enum class Rejection { none, extinct, over_capacity, too_slow };
std::string to_string(Rejection r);

struct SimulationOutcome {
  Rejection rejection = Rejection::none;
  PopulationTrajectory trajectory;
  bool accepted() const { return rejection == Rejection::none; }
};

/// Initial state X0 ~ U{50..99}, Y0 ~ U{100..149}; runs kSimulationEvents
/// events or stops at the first rejection condition.
SimulationOutcome gillespie_simulate(const LotkaVolterraRates& rates, Rng& rng);

/// Context/target draw from an accepted trajectory with y = (predators, prey)
/// scaled by kPopulationScale and x scaled by kTimeScale.
Task gen_population_task(const PopulationTrajectory& trajectory, const SamplingRule& rule, Rng& rng);

struct SimulationStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
};

/// Simulates with freshly drawn rates until one trajectory is accepted.
PopulationTrajectory simulate_accepted(Rng& rng, SimulationStats* stats = nullptr);

// ---------------------------------------------------------------- sources

enum class Dataset { matern, weakly_periodic, fourier, step, temperature, population };
std::string to_string(Dataset d);
std::optional<Dataset> dataset_from_string(const std::string& name);

/// Kernel that generated the GP datasets (the oracle). Empty for other datasets.
std::optional<kernels::KernelSpec> oracle_kernel(Dataset d);

/// Task source for the synthetic and simulated datasets. Training joins the
/// context into the targets; evaluation scores held-out targets only.
/// Temperature tasks need a data file and are built in dataio.
TaskSource synthetic_source(Dataset d, SimulationStats* stats = nullptr, bool join_context = true);

}  // namespace npf::datagen
