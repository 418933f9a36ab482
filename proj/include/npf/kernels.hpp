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

#include <span>
#include <string>

#include <Eigen/Core>

#include "npf/autodiff.hpp"

namespace npf::kernels {

enum class KernelKind { eq, matern52, weakly_periodic, exp_sine_squared };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Stationary variance is 1 for every kind. `period` is read only by
/// exp_sine_squared; weakly_periodic ignores both fields.
struct KernelSpec {
  KernelKind kind = KernelKind::eq;
  double lengthscale = 1.0;
  double period = 1.0;

  static KernelSpec eq(double l) { return {KernelKind::eq, l, 1.0}; }
  static KernelSpec matern52(double l) { return {KernelKind::matern52, l, 1.0}; }
  static KernelSpec weakly_periodic() { return {KernelKind::weakly_periodic, 1.0, 1.0}; }
  static KernelSpec exp_sine_squared(double l, double period) {
    return {KernelKind::exp_sine_squared, l, period};
  }

  /// Throws ContractViolation on non-positive or non-finite parameters.
  void validate() const;
  bool stationary() const { return kind != KernelKind::weakly_periodic; }
};

/// With d = |x - x'|:
///   eq                exp(-d^2 / (2 l^2))
///   matern52          (1 + sqrt5 d / l + 5 d^2 / (3 l^2)) exp(-sqrt5 d / l)
///   weakly_periodic   exp(-d^2/8 - (c(x) - c(x'))^2/2 - (s(x) - s(x'))^2/2),
///                     c = cos(8 pi x), s = sin(8 pi x)
///   exp_sine_squared  exp(-2 sin^2(pi d / period) / l^2)
double kernel_eval(const KernelSpec& spec, double x, double x_prime);

/// |xs| x |ys| matrix of kernel_eval(spec, xs[i], ys[j]).
Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const double> xs, std::span<const double> ys);

/// Differentiable EQ gram matrix exp(-(x - y)^2 / (2 l^2)) with
/// l = exp(log_lengthscale). Returns a (|xs| x |ys|) node.
ad::Var eq_gram(ad::Tape& tape, ad::Var log_lengthscale, std::span<const double> xs,
                std::span<const double> ys);

}  // namespace npf::kernels
