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

#include "npf/gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace npf::gp {

const std::vector<double>& jitter_schedule() {
  static const std::vector<double> schedule{0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
  return schedule;
}

CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& matrix) {
  NPF_REQUIRE(matrix.rows() == matrix.cols(), "cholesky_with_jitter: square matrix required");
  NPF_REQUIRE((matrix - matrix.transpose()).cwiseAbs().maxCoeff() <= 1e-10 || matrix.size() == 0,
              "cholesky_with_jitter: matrix not symmetric");
  const Eigen::Index n = matrix.rows();
  for (double jitter : jitter_schedule()) {
    Eigen::MatrixXd shifted = matrix;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (lower.allFinite()) return {lower, jitter};
    }
  }
  throw SingularMatrixError("matrix of size " + std::to_string(n) +
                            " not positive definite with jitter up to 1e-2");
}

PosteriorGaussian gp_posterior(std::span<const double> x_context, std::span<const double> y_context,
                               const kernels::KernelSpec& spec, double noise,
                               std::span<const double> targets) {
  NPF_REQUIRE(noise >= 0.0 && std::isfinite(noise), "gp_posterior: noise must be >= 0");
  NPF_REQUIRE(x_context.size() == y_context.size(), "gp_posterior: context size mismatch");
  PosteriorGaussian post;
  post.noise = noise;
  post.locations = Eigen::Map<const Eigen::VectorXd>(targets.data(),
                                                     static_cast<Eigen::Index>(targets.size()));
  const auto m = static_cast<Eigen::Index>(targets.size());
  Eigen::MatrixXd k_tt = kernels::gram(spec, targets, targets);
  k_tt.diagonal().array() += noise;
  if (x_context.empty()) {
    post.mean = Eigen::VectorXd::Zero(m);
    post.covariance = std::move(k_tt);
    return post;
  }
  Eigen::MatrixXd k_cc = kernels::gram(spec, x_context, x_context);
  k_cc.diagonal().array() += noise;
  const Eigen::MatrixXd k_ct = kernels::gram(spec, x_context, targets);
  const CholeskyFactor chol = cholesky_with_jitter(k_cc);
  const auto L = chol.lower.triangularView<Eigen::Lower>();
  const Eigen::Map<const Eigen::VectorXd> y(y_context.data(),
                                            static_cast<Eigen::Index>(y_context.size()));
  const Eigen::MatrixXd a = L.solve(k_ct);  // L^{-1} k_ct
  const Eigen::VectorXd b = L.solve(y);     // L^{-1} y
  post.mean = a.transpose() * b;
  post.covariance = k_tt - a.transpose() * a;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
  return post;
}

std::vector<Eigen::VectorXd> gp_sample(const PosteriorGaussian& posterior, std::size_t count,
                                       Rng& rng) {
  NPF_REQUIRE(count >= 1, "gp_sample: count must be positive");
  const Eigen::Index n = posterior.mean.size();
  Eigen::MatrixXd lower;
  if (posterior.covariance.isZero(0.0)) {
    lower = Eigen::MatrixXd::Zero(n, n);
  } else {
    lower = cholesky_with_jitter(posterior.covariance).lower;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Eigen::VectorXd eps(n);
    for (Eigen::Index i = 0; i < n; ++i) eps[i] = normal(rng);
    out.emplace_back(posterior.mean + lower.triangularView<Eigen::Lower>() * eps);
  }
  return out;
}

double log_marginal_likelihood(std::span<const double> x, std::span<const double> y,
                               const kernels::KernelSpec& spec, double noise) {
  NPF_REQUIRE(x.size() == y.size() && !x.empty(), "log_marginal_likelihood: size mismatch");
  NPF_REQUIRE(noise >= 0.0, "log_marginal_likelihood: negative noise");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd k = kernels::gram(spec, x, x);
  k.diagonal().array() += noise;
  const CholeskyFactor chol = cholesky_with_jitter(k);
  const Eigen::VectorXd alpha =
      chol.lower.triangularView<Eigen::Lower>().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), n));
  return -0.5 * alpha.squaredNorm() - chol.lower.diagonal().array().log().sum() -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

Marginals gp_marginals(const PosteriorGaussian& posterior) {
  Marginals m;
  m.mean = posterior.mean;
  m.variance = posterior.covariance.diagonal().cwiseMax(kVarianceFloor);
  return m;
}

ad::Var cholesky_with_jitter(ad::Var matrix) {
  for (double jitter : jitter_schedule()) {
    try {
      ad::Var l = ad::cholesky(matrix, jitter);
      bool finite = true;
      for (double v : l.values()) finite = finite && std::isfinite(v);
      if (finite) return l;
    } catch (const SingularMatrixError&) {
    }
  }
  throw SingularMatrixError("differentiable cholesky failed with jitter up to 1e-2");
}

namespace {

ad::Var identity(ad::Tape& tape, std::size_t n) {
  std::vector<double> eye(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  return tape.constant({n, n}, std::move(eye));
}

}  // namespace

DifferentiablePosterior eq_posterior(ad::Tape& tape, ad::Var log_lengthscale, ad::Var log_noise,
                                     std::span<const double> x_context,
                                     std::span<const double> y_context, std::size_t y_dim,
                                     std::span<const double> targets) {
  NPF_REQUIRE(!x_context.empty(), "eq_posterior: context must be non-empty");
  NPF_REQUIRE(y_context.size() == x_context.size() * y_dim, "eq_posterior: context size mismatch");
  const std::size_t n = x_context.size(), m = targets.size();
  ad::Var noise = ad::exp(ad::reshape(log_noise, {}));

  ad::Var k_cc = kernels::eq_gram(tape, log_lengthscale, x_context, x_context);
  k_cc = k_cc + ad::broadcast(noise, {n, n}) * identity(tape, n);
  ad::Var l_cc = cholesky_with_jitter(k_cc);
  ad::Var k_ct = kernels::eq_gram(tape, log_lengthscale, x_context, targets);
  ad::Var a = ad::solve_lower(l_cc, k_ct);  // (n x m)
  ad::Var y = tape.constant({n, y_dim}, std::vector<double>(y_context.begin(), y_context.end()));
  ad::Var b = ad::solve_lower(l_cc, y);  // (n x d_y)
  ad::Var a_t = ad::transpose(a);

  DifferentiablePosterior post;
  post.mean = ad::matmul(a_t, b);
  ad::Var k_tt = kernels::eq_gram(tape, log_lengthscale, targets, targets);
  ad::Var cov = k_tt + ad::broadcast(noise, {m, m}) * identity(tape, m) - ad::matmul(a_t, a);
  post.scale_factor = cholesky_with_jitter(cov);
  return post;
}

ad::Var draw(ad::Tape& tape, const DifferentiablePosterior& posterior, Rng& rng) {
  const ad::Shape& shape = posterior.mean.shape();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(ad::numel(shape));
  for (double& e : eps) e = normal(rng);
  return posterior.mean + ad::matmul(posterior.scale_factor, tape.constant(shape, std::move(eps)));
}

}  // namespace npf::gp
