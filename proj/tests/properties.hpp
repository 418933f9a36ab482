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


// Property checks shared by the unit tests and the acceptance binary. Nothing
// here depends on the test framework: checks return their worst deviation or
// a violation count and the caller decides how to report it.

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "npf/autodiff.hpp"
#include "npf/kernels.hpp"
#include "npf/models.hpp"

namespace npf::test {

// ---------------------------------------------------------------- autodiff

struct PrimitiveCase {
  std::string name;
  ad::Shape shape;
  std::function<std::vector<double>(Rng&)> point;
  ad::Shape out_shape;
  std::function<ad::Var(ad::Var)> body;
};

/// One case per differentiable primitive, each a map from one input tensor.
std::vector<PrimitiveCase> primitive_cases();

/// sum(w * y) for fixed w, so every output coordinate gets a distinct
/// upstream gradient.
ad::Var weighted(ad::Var y, const std::vector<double>& w);

/// Worst relative central-difference error of `c` over `points` random points.
double primitive_grad_error(const PrimitiveCase& c, Rng& rng, int points);

// ---------------------------------------------------------------- gp

/// Kernel values from the textbook forms, written independently of the library.
double reference_kernel(const kernels::KernelSpec& s, double x, double xp);

/// One KernelSpec per kernel kind.
std::vector<kernels::KernelSpec> all_kernel_specs();

struct Conditioned {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Conditions the joint Gaussian over noisy (context, target) observations
/// with explicit inverses.
Conditioned brute_force_condition(const kernels::KernelSpec& s, const std::vector<double>& xc,
                                  const std::vector<double>& yc, const std::vector<double>& xt,
                                  double noise);

/// Worst absolute gap between gp_posterior and brute_force_condition over
/// `instances` random 5-point problems for every kernel kind.
double gp_conditioning_error(Rng& rng, int instances);

// ---------------------------------------------------------------- eval

/// Minimum assignment cost by enumerating every permutation.
double brute_force_cost(const Eigen::MatrixXd& c);

/// Random cost matrices of size 1..max_n where hungarian disagrees with the
/// brute force or returns a non-bijection.
std::size_t hungarian_mismatches(Rng& rng, int max_n, int per_size);

// ---------------------------------------------------------------- models

inline constexpr models::ModelKind kAllModelKinds[] = {
    models::ModelKind::np, models::ModelKind::anp, models::ModelKind::convcnp,
    models::ModelKind::gpconvcnp};

Task random_task(Rng& rng, std::size_t n, std::size_t m, std::size_t dy = 1);

/// `t` with its context pairs shuffled.
Task permuted(const Task& t, Rng& rng);

/// Largest entry-wise gap between two predictions of the same shape.
double max_diff(const models::PredictiveDistribution& a, const models::PredictiveDistribution& b,
                bool means_only);

/// Worst prediction change under context shuffles, with the sampling
/// stream fixed, for a freshly initialised model of `kind`.
double permutation_error(models::ModelKind kind, Rng& rng, int tasks);

/// Worst change of the predicted means when every input moves by a whole
/// number of grid cells.
double grid_shift_error(models::ModelKind kind, Rng& rng);

// ---------------------------------------------------------------- data

double gillespie_acceptance_rate(Rng& rng, int draws);

/// Saves and reloads every model kind with random optimiser state; true when
/// all parameters, moments and metadata come back bit for bit.
bool checkpoint_round_trip_exact(const std::filesystem::path& dir);

/// |sample variance - k(x, x)| of the first context output over `draws`
/// prior tasks.
double prior_variance_error(const kernels::KernelSpec& spec, Rng& rng, int draws);

/// Draws violating the Fourier-series bounds (coefficient ranges, term
/// count, |y| <= 1 + K, outputs equal to the series).
std::size_t fourier_violations(Rng& rng, int draws);

/// Draws violating the step-function bounds (step count, segment width,
/// value range, minimum jump, piecewise-constant outputs).
std::size_t step_violations(Rng& rng, int draws);

/// CSV with two train cities, one test city and an empty column, `hours` rows.
std::filesystem::path write_temperature_csv(const std::filesystem::path& dir, std::size_t hours);

/// Temperature tasks (both modes) violating the size rule, x in (0, 3) or
/// the extrapolation boundary at 1.5.
std::size_t temperature_violations(const std::filesystem::path& csv, Rng& rng, int draws);

/// Simulated population tasks violating two outputs, M >= 70, y in (0, 5]
/// or the time range.
std::size_t population_violations(Rng& rng, int draws);

}  // namespace npf::test
