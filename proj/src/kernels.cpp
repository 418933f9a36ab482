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

#include "npf/kernels.hpp"

#include <cmath>
#include <numbers>

namespace npf::kernels {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::eq: return "eq";
    case KernelKind::matern52: return "matern52";
    case KernelKind::weakly_periodic: return "weakly_periodic";
    case KernelKind::exp_sine_squared: return "exp_sine_squared";
  }
  return "?";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "eq") return KernelKind::eq;
  if (name == "matern52") return KernelKind::matern52;
  if (name == "weakly_periodic") return KernelKind::weakly_periodic;
  if (name == "exp_sine_squared") return KernelKind::exp_sine_squared;
  throw ContractViolation("unknown kernel kind '" + name + "'");
}

void KernelSpec::validate() const {
  NPF_REQUIRE(std::isfinite(lengthscale) && lengthscale > 0.0,
              "kernel lengthscale must be positive and finite");
  if (kind == KernelKind::exp_sine_squared)
    NPF_REQUIRE(std::isfinite(period) && period > 0.0, "kernel period must be positive and finite");
}

double kernel_eval(const KernelSpec& spec, double x, double x_prime) {
  spec.validate();
  const double d = std::abs(x - x_prime);
  const double l = spec.lengthscale;
  switch (spec.kind) {
    case KernelKind::eq:
      return std::exp(-d * d / (2.0 * l * l));
    case KernelKind::matern52: {
      const double r = std::sqrt(5.0) * d / l;
      return (1.0 + r + 5.0 * d * d / (3.0 * l * l)) * std::exp(-r);
    }
    case KernelKind::weakly_periodic: {
      constexpr double w = 8.0 * std::numbers::pi;
      const double dc = std::cos(w * x) - std::cos(w * x_prime);
      const double ds = std::sin(w * x) - std::sin(w * x_prime);
      return std::exp(-d * d / 8.0) * std::exp(-0.5 * dc * dc) * std::exp(-0.5 * ds * ds);
    }
    case KernelKind::exp_sine_squared: {
      const double s = std::sin(std::numbers::pi * d / spec.period);
      return std::exp(-2.0 * s * s / (l * l));
    }
  }
  return 0.0;
}

Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const double> xs,
                     std::span<const double> ys) {
  spec.validate();
  Eigen::MatrixXd k(xs.size(), ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) k(i, j) = kernel_eval(spec, xs[i], ys[j]);
  return k;
}

ad::Var eq_gram(ad::Tape& tape, ad::Var log_lengthscale, std::span<const double> xs,
                std::span<const double> ys) {
  NPF_REQUIRE(log_lengthscale.size() == 1, "eq_gram: log-lengthscale must be a scalar");
  const ad::Shape shape{xs.size(), ys.size()};
  std::vector<double> d2(xs.size() * ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) {
      const double d = xs[i] - ys[j];
      d2[i * ys.size() + j] = d * d;
    }
  // -0.5 / l^2 = -0.5 exp(-2 log l)
  ad::Var coef = ad::scale(ad::exp(ad::scale(ad::reshape(log_lengthscale, {}), -2.0)), -0.5);
  return ad::exp(ad::mul(tape.constant(shape, std::move(d2)), ad::broadcast(coef, shape)));
}

}  // namespace npf::kernels
