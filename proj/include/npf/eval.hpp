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

// Predictive log-likelihood, reconstruction RMSE, the Wasserstein-2 distance
// between equal-size sample sets and the multi-seed evaluation harness.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "npf/datagen.hpp"
#include "npf/kernels.hpp"
#include "npf/models.hpp"
#include "npf/task.hpp"

namespace npf::eval {

using Rng = std::mt19937_64;
using Curves = std::vector<std::vector<double>>;

/// Mean over targets of log((1/S) sum_s N(y; mu_s, sigma_s^2)), the density
/// of a target being the product over its output dimensions.
double predictive_ll(const models::PredictiveDistribution& pred, std::span<const double> y);

double recon_rmse(std::span<const double> predicted_mean, std::span<const double> y);

struct Assignment {
  std::vector<std::size_t> to;  // row i is matched with column to[i]
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (O(n^3)).
Assignment hungarian(const Eigen::MatrixXd& cost);

/// sqrt(min over pairings of sum ||p_i - q_pi(i)||^2).
double wasserstein2(const Curves& p, const Curves& q);

// ---------------------------------------------------------------- predictors

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual models::PredictiveDistribution predict(const Task& task, std::size_t samples, Rng& rng) = 0;
  /// `count` function draws at task.x_target, or nothing for deterministic models.
  virtual std::optional<Curves> sample_curves(const Task& task, std::size_t count, Rng& rng) = 0;
  /// True for the training-free GP baselines (spread reported as a standard error).
  virtual bool is_gp_baseline() const { return false; }
};

/// Wraps a trained model. Curves are the S component means, so ConvCNP has none.
class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(models::Model& model) : model_(model) {}
  std::string name() const override;
  models::PredictiveDistribution predict(const Task& task, std::size_t samples, Rng& rng) override;
  std::optional<Curves> sample_curves(const Task& task, std::size_t count, Rng& rng) override;

 private:
  models::Model& model_;
};

/// Exact GP regression with a fixed kernel, independently per output dimension.
class GPBaseline : public Predictor {
 public:
  GPBaseline(std::string name, kernels::KernelSpec spec, double noise)
      : name_(std::move(name)), spec_(spec), noise_(noise) {}
  std::string name() const override { return name_; }
  const kernels::KernelSpec& spec() const { return spec_; }
  double noise() const { return noise_; }
  models::PredictiveDistribution predict(const Task& task, std::size_t samples, Rng& rng) override;
  std::optional<Curves> sample_curves(const Task& task, std::size_t count, Rng& rng) override;
  bool is_gp_baseline() const override { return true; }

 private:
  std::string name_;
  kernels::KernelSpec spec_;
  double noise_;
};

inline constexpr double kBaselineNoise = 1e-4;

/// Candidate EQ lengthscales 0.05, 0.10, ..., 2.00.
std::vector<double> eq_lengthscale_grid();

/// Grid lengthscale maximising the log marginal likelihood of the task's context.
double select_eq_lengthscale(const Task& task, double noise = kBaselineNoise);

/// EQ-kernel GP refitted on every task by select_eq_lengthscale.
class MarginalEqBaseline : public Predictor {
 public:
  explicit MarginalEqBaseline(double noise = kBaselineNoise) : noise_(noise) {}
  std::string name() const override { return "gp-eq"; }
  models::PredictiveDistribution predict(const Task& task, std::size_t samples, Rng& rng) override;
  std::optional<Curves> sample_curves(const Task& task, std::size_t count, Rng& rng) override;
  bool is_gp_baseline() const override { return true; }

 private:
  GPBaseline fitted(const Task& task) const;
  double noise_;
};

struct LengthscaleFit {
  double lengthscale = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_ll;  // per grid entry
};

/// Alternative protocol: one EQ lengthscale for all tasks, the one with the
/// best mean predictive LL on `tasks` held-out tasks drawn with `seed`.
LengthscaleFit fit_eq_lengthscale(const datagen::TaskSource& source, std::size_t tasks,
                                  std::uint64_t seed, double noise = kBaselineNoise);

// ---------------------------------------------------------------- harness

struct EvalOptions {
  std::vector<std::uint64_t> seeds{0};
  std::size_t tasks_per_seed = 2048;
  /// Monte-Carlo components for the predictive likelihood.
  std::size_t samples = 20;
  /// Sample-set size for W2; 0 disables W2.
  std::size_t w2_samples = 20;
  /// W2 is computed on the first w2_tasks tasks of each seed (0: all).
  std::size_t w2_tasks = 0;
  bool reconstruction = true;
};

struct EvalReport {
  std::string predictor;
  std::string metric;
  std::vector<double> per_seed;
  double mean = 0.0;
  double spread = 0.0;
  /// "std" (across seeds), "sem" (across seeds) or "sem_tasks" (one seed).
  std::string spread_kind;
  std::size_t task_count = 0;
  std::size_t samples_per_task = 0;
  std::size_t failed = 0;
};

/// Task stream used for evaluation seed `seed`; disjoint from the training
/// stream of the same numeric seed.
Rng evaluation_task_rng(std::uint64_t seed);

/// predictive_ll, recon_rmse and, when `oracle` is set and the predictor can
/// sample, W2 against oracle posterior draws at the targets.
std::vector<EvalReport> evaluate(Predictor& predictor, const datagen::TaskSource& source,
                                 const std::optional<kernels::KernelSpec>& oracle,
                                 const EvalOptions& options);

/// Per-task metrics for one seed; exposed for tests and plots.
struct TaskMetrics {
  double ll = 0.0;
  std::optional<double> rmse;
  std::optional<double> w2;
};
TaskMetrics evaluate_task(Predictor& predictor, const Task& task,
                          const std::optional<kernels::KernelSpec>& oracle, const EvalOptions& options,
                          bool with_w2, Rng& rng);

void append_reports_jsonl(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                          const std::string& dataset);
/// Columns: predictor,dataset,metric,mean,spread,spread_kind,seeds,task_count,samples_per_task,failed
void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                       const std::string& dataset);
inline constexpr const char* kReportCsvHeader =
    "predictor,dataset,metric,mean,spread,spread_kind,seeds,task_count,samples_per_task,failed";

}  // namespace npf::eval
