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

#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "npf/autodiff.hpp"
#include "npf/kernels.hpp"

namespace npf::gp {

using Rng = std::mt19937_64;

/// Jitters tried in order: 0, then 1e-8 escalating x10 up to 1e-2.
const std::vector<double>& jitter_schedule();

struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;
};

/// Factorizes `matrix` + jitter I with the first jitter that succeeds.
/// Throws SingularMatrixError when even 1e-2 fails.
CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& matrix);

struct PosteriorGaussian {
  Eigen::VectorXd locations;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double noise = 0.0;
};

/// Exact GP posterior at `targets` given the context. The predictive
/// covariance includes the noise term: K = k_tt + s2 I - k_tc^T (k_cc + s2 I)^{-1} k_tc.
/// An empty context yields the prior (mean 0, K = k_tt + s2 I).
PosteriorGaussian gp_posterior(std::span<const double> x_context, std::span<const double> y_context,
                               const kernels::KernelSpec& spec, double noise,
                               std::span<const double> targets);

/// `count` draws mean + L eps, L from cholesky_with_jitter(covariance).
std::vector<Eigen::VectorXd> gp_sample(const PosteriorGaussian& posterior, std::size_t count,
                                       Rng& rng);

/// log N(y; 0, k(x, x) + noise I)
double log_marginal_likelihood(std::span<const double> x, std::span<const double> y,
                               const kernels::KernelSpec& spec, double noise);

inline constexpr double kVarianceFloor = 1e-10;

struct Marginals {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // clamped below at kVarianceFloor
};

Marginals gp_marginals(const PosteriorGaussian& posterior);

/// Cholesky on a tape, escalating through jitter_schedule().
ad::Var cholesky_with_jitter(ad::Var matrix);

/// Differentiable EQ-kernel posterior used by the GP-ConvCNP encoder. The
/// lengthscale and noise enter as log-parameters so gradients flow to both.
struct DifferentiablePosterior {
  ad::Var mean;          // (|targets| x d_y)
  ad::Var scale_factor;  // lower Cholesky factor of the posterior covariance
};

DifferentiablePosterior eq_posterior(ad::Tape& tape, ad::Var log_lengthscale, ad::Var log_noise,
                                     std::span<const double> x_context,
                                     std::span<const double> y_context, std::size_t y_dim,
                                     std::span<const double> targets);

/// mean + L eps for a standard-normal eps of shape (|targets| x d_y).
ad::Var draw(ad::Tape& tape, const DifferentiablePosterior& posterior, Rng& rng);

}  // namespace npf::gp
