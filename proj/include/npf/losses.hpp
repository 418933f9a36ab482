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

#include "npf/autodiff.hpp"
#include "npf/layers.hpp"
#include "npf/models.hpp"
#include "npf/task.hpp"

namespace npf::training {

using Rng = std::mt19937_64;

/// Mean over targets of -log N(y; mu, sigma^2), summed over output dimensions.
/// Throws ContractViolation if any sigma is below the decoder floor.
ad::Var nll_loss(const models::GaussianHead& head, std::span<const double> y);
/// Value-level variant for a single-component prediction.
double nll_loss(const models::PredictiveDistribution& pred, std::span<const double> y);

/// KL(q1 || q2) between diagonal Gaussians, summed over dimensions.
ad::Var kl_diag(const models::LatentGaussian& q1, const models::LatentGaussian& q2);
double kl_diag(std::span<const double> mu1, std::span<const double> sigma1,
               std::span<const double> mu2, std::span<const double> sigma2);

/// NLL(decode(z), y_t) + KL(q(z | targets) || q(z | context)) with a single
/// z drawn from the target-conditioned posterior.
ad::Var elbo_loss(nn::Scope& scope, models::NeuralProcess& model, const Task& task, Rng& rng);
ad::Var elbo_loss(nn::Scope& scope, models::AttentiveNeuralProcess& model, const Task& task,
                  Rng& rng);

}  // namespace npf::training
