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

#include "npf/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npf/errors.hpp"
#include "npf/gp.hpp"

namespace npf {

std::vector<double> Task::y_context_column(std::size_t d) const {
  std::vector<double> out(num_context());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y_context[i * y_dim + d];
  return out;
}

std::vector<double> Task::y_target_column(std::size_t d) const {
  std::vector<double> out(num_target());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y_target[i * y_dim + d];
  return out;
}

void Task::validate() const {
  NPF_REQUIRE(y_dim >= 1, "task: y_dim must be positive");
  NPF_REQUIRE(!x_context.empty(), "task: empty context");
  NPF_REQUIRE(y_context.size() == x_context.size() * y_dim, "task: context output size mismatch");
  NPF_REQUIRE(y_target.size() == x_target.size() * y_dim, "task: target output size mismatch");
}

}  // namespace npf

namespace npf::datagen {

namespace {

int uniform_int(Rng& rng, int lo, int hi_inclusive) {
  return std::uniform_int_distribution<int>(lo, hi_inclusive)(rng);
}

double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Splits N + M inputs/outputs into context (first N) and targets.
Task assemble(const std::vector<double>& xs, const std::vector<double>& ys, std::size_t y_dim,
              std::size_t n, bool join_context, std::string tag) {
  Task task;
  task.y_dim = y_dim;
  task.tag = std::move(tag);
  task.x_context.assign(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(n));
  task.y_context.assign(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(n * y_dim));
  const std::size_t first_target = join_context ? 0 : n;
  task.x_target.assign(xs.begin() + static_cast<std::ptrdiff_t>(first_target), xs.end());
  task.y_target.assign(ys.begin() + static_cast<std::ptrdiff_t>(first_target * y_dim), ys.end());
  return task;
}

}  // namespace

SamplingRule SamplingRule::synthetic() { return {}; }

SamplingRule SamplingRule::population() {
  SamplingRule r;
  r.n_min = 20;
  r.n_max = 100;
  r.m_floor = 70;
  r.m_max = 150;
  return r;
}

void SamplingRule::validate() const {
  NPF_REQUIRE(n_min >= 1 && n_min < n_max, "sampling rule: empty range for N");
  NPF_REQUIRE(std::max(m_floor, n_max - 1) < m_max, "sampling rule: M range may be empty");
  NPF_REQUIRE(x_lo < x_hi, "sampling rule: empty input interval");
}

std::pair<std::size_t, std::size_t> SamplingRule::draw_sizes(Rng& rng) const {
  validate();
  const int n = uniform_int(rng, n_min, n_max - 1);
  const int m = uniform_int(rng, std::max(m_floor, n), m_max - 1);
  return {static_cast<std::size_t>(n), static_cast<std::size_t>(m)};
}

Task gen_gp_task(const kernels::KernelSpec& spec, const SamplingRule& rule, Rng& rng) {
  spec.validate();
  const auto [n, m] = rule.draw_sizes(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 5; ++attempt) {
    std::vector<double> xs(n + m);
    for (double& x : xs) x = uniform_real(rng, rule.x_lo, rule.x_hi);
    try {
      const gp::CholeskyFactor chol = gp::cholesky_with_jitter(kernels::gram(spec, xs, xs));
      Eigen::VectorXd eps(static_cast<Eigen::Index>(xs.size()));
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
      const Eigen::VectorXd f = chol.lower.triangularView<Eigen::Lower>() * eps;
      std::vector<double> ys(f.data(), f.data() + f.size());
      Task task = assemble(xs, ys, 1, n, rule.join_context, kernels::to_string(spec.kind));
      task.params["lengthscale"] = spec.lengthscale;
      task.params["jitter"] = chol.jitter_used;
      return task;
    } catch (const SingularMatrixError&) {
    }
  }
  throw GenerationError("gen_gp_task: covariance singular in 5 attempts");
}

// ---------------------------------------------------------------- fourier

FourierSeries FourierSeries::draw(Rng& rng) {
  FourierSeries f;
  const int k = uniform_int(rng, 10, 19);
  f.bias = uniform_real(rng, -1.0, 1.0);
  f.amplitudes.resize(static_cast<std::size_t>(k));
  f.phases.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    f.amplitudes[static_cast<std::size_t>(i)] = uniform_real(rng, -1.0, 1.0);
    f.phases[static_cast<std::size_t>(i)] = uniform_real(rng, -1.0, 1.0);
  }
  return f;
}

double FourierSeries::operator()(double x) const {
  double y = bias;
  for (std::size_t k = 0; k < amplitudes.size(); ++k)
    y += amplitudes[k] * std::cos(static_cast<double>(k + 1) * x - phases[k]);
  return y;
}

Task make_task_from_function(const std::function<double(double)>& f, const SamplingRule& rule,
                             Rng& rng, std::string tag) {
  const auto [n, m] = rule.draw_sizes(rng);
  std::vector<double> xs(n + m), ys(n + m);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = uniform_real(rng, rule.x_lo, rule.x_hi);
    ys[i] = f(xs[i]);
  }
  return assemble(xs, ys, 1, n, rule.join_context, std::move(tag));
}

Task gen_fourier_task(const SamplingRule& rule, Rng& rng) {
  const FourierSeries series = FourierSeries::draw(rng);
  Task task = make_task_from_function(series, rule, rng, "fourier");
  task.params["components"] = static_cast<double>(series.amplitudes.size());
  return task;
}

// ---------------------------------------------------------------- steps

StepFunction StepFunction::draw(double lo, double hi, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int s = uniform_int(rng, 3, 9);
    StepFunction f;
    f.steps.resize(static_cast<std::size_t>(s));
    for (double& p : f.steps) p = uniform_real(rng, lo, hi);
    std::sort(f.steps.begin(), f.steps.end());
    f.values.resize(f.steps.size() + 1);
    for (double& v : f.values) v = uniform_real(rng, -3.0, 3.0);

    bool ok = true;
    double left = lo;
    for (std::size_t i = 0; i <= f.steps.size() && ok; ++i) {
      const double right = i < f.steps.size() ? f.steps[i] : hi;
      ok = right - left >= kMinSegmentWidth;
      left = right;
    }
    for (std::size_t i = 1; i < f.values.size() && ok; ++i)
      ok = std::abs(f.values[i] - f.values[i - 1]) >= kMinStepHeight;
    if (ok) return f;
  }
  throw GenerationError("step function: 100 rejected draws");
}

double StepFunction::operator()(double x) const {
  const auto it = std::upper_bound(steps.begin(), steps.end(), x);
  return values[static_cast<std::size_t>(it - steps.begin())];
}

Task gen_step_task(const SamplingRule& rule, Rng& rng) {
  const StepFunction f = StepFunction::draw(rule.x_lo, rule.x_hi, rng);
  Task task = make_task_from_function(f, rule, rng, "step");
  task.params["steps"] = static_cast<double>(f.steps.size());
  return task;
}

// ---------------------------------------------------------------- populations

LotkaVolterraRates LotkaVolterraRates::draw(Rng& rng) {
  LotkaVolterraRates r;
  r.theta[0] = uniform_real(rng, 0.005, 0.01);
  r.theta[1] = uniform_real(rng, 0.5, 0.8);
  r.theta[2] = uniform_real(rng, 0.5, 0.8);
  r.theta[3] = uniform_real(rng, 0.005, 0.01);
  return r;
}

std::array<double, 4> LotkaVolterraRates::event_rates(long predators, long prey) const {
  const double x = static_cast<double>(predators), y = static_cast<double>(prey);
  return {theta[0] * x * y, theta[1] * x, theta[2] * y, theta[3] * x * y};
}

std::vector<double> PopulationTrajectory::scaled_times() const {
  std::vector<double> out(times.size());
  std::transform(times.begin(), times.end(), out.begin(), [](double t) { return t * kTimeScale; });
  return out;
}

std::string to_string(Rejection r) {
  switch (r) {
    case Rejection::none: return "accepted";
    case Rejection::extinct: return "extinct";
    case Rejection::over_capacity: return "over_capacity";
    case Rejection::too_slow: return "too_slow";
  }
  return "?";
}

SimulationOutcome gillespie_simulate(const LotkaVolterraRates& rates, Rng& rng) {
  SimulationOutcome out;
  PopulationTrajectory& tr = out.trajectory;
  tr.rates = rates;
  tr.times.reserve(kSimulationEvents + 1);
  tr.predators.reserve(kSimulationEvents + 1);
  tr.prey.reserve(kSimulationEvents + 1);

  long x = uniform_int(rng, 50, 99);
  long y = uniform_int(rng, 100, 149);
  double t = 0.0;
  tr.times.push_back(t);
  tr.predators.push_back(x);
  tr.prey.push_back(y);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t event = 0; event < kSimulationEvents; ++event) {
    const auto r = rates.event_rates(x, y);
    const double total = r[0] + r[1] + r[2] + r[3];
    t += std::exponential_distribution<double>(total)(rng);
    double u = unit(rng) * total;
    std::size_t which = 0;
    while (which < 3 && u >= r[which]) u -= r[which++];
    switch (which) {
      case 0: ++x; break;
      case 1: --x; break;
      case 2: ++y; break;
      default: --y; break;
    }
    tr.times.push_back(t);
    tr.predators.push_back(x);
    tr.prey.push_back(y);
    if (x <= 0 || y <= 0) {
      out.rejection = Rejection::extinct;
      return out;
    }
    if (x + y > kPopulationCap) {
      out.rejection = Rejection::over_capacity;
      return out;
    }
    if (t > kMaxSimulatedTime) {
      out.rejection = Rejection::too_slow;
      return out;
    }
  }
  return out;
}

Task gen_population_task(const PopulationTrajectory& trajectory, const SamplingRule& rule,
                         Rng& rng) {
  const auto [n, m] = rule.draw_sizes(rng);
  if (trajectory.size() < n + m)
    throw GenerationError("population task needs " + std::to_string(n + m) +
                          " points, trajectory has " + std::to_string(trajectory.size()));
  std::vector<std::size_t> idx(trajectory.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n + m entries are a uniform draw without replacement.
  for (std::size_t i = 0; i < n + m; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  std::vector<double> xs(n + m), ys(2 * (n + m));
  for (std::size_t i = 0; i < n + m; ++i) {
    const std::size_t k = idx[i];
    xs[i] = trajectory.times[k] * kTimeScale;
    ys[2 * i] = static_cast<double>(trajectory.predators[k]) * kPopulationScale;
    ys[2 * i + 1] = static_cast<double>(trajectory.prey[k]) * kPopulationScale;
  }
  Task task = assemble(xs, ys, 2, n, rule.join_context, "population");
  for (std::size_t i = 0; i < 4; ++i) task.params["theta" + std::to_string(i)] = trajectory.rates.theta[i];
  return task;
}

PopulationTrajectory simulate_accepted(Rng& rng, SimulationStats* stats) {
  for (;;) {
    const LotkaVolterraRates rates = LotkaVolterraRates::draw(rng);
    SimulationOutcome outcome = gillespie_simulate(rates, rng);
    if (stats) {
      ++stats->attempts;
      if (outcome.accepted()) ++stats->accepted;
    }
    if (outcome.accepted()) return std::move(outcome.trajectory);
  }
}

// ---------------------------------------------------------------- sources

std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::matern: return "matern";
    case Dataset::weakly_periodic: return "weakly_periodic";
    case Dataset::fourier: return "fourier";
    case Dataset::step: return "step";
    case Dataset::temperature: return "temperature";
    case Dataset::population: return "population";
  }
  return "?";
}

std::optional<Dataset> dataset_from_string(const std::string& name) {
  for (Dataset d : {Dataset::matern, Dataset::weakly_periodic, Dataset::fourier, Dataset::step,
                    Dataset::temperature, Dataset::population}) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

std::optional<kernels::KernelSpec> oracle_kernel(Dataset d) {
  if (d == Dataset::matern) return kernels::KernelSpec::matern52(0.5);
  if (d == Dataset::weakly_periodic) return kernels::KernelSpec::weakly_periodic();
  return std::nullopt;
}

TaskSource synthetic_source(Dataset d, SimulationStats* stats, bool join_context) {
  SamplingRule rule = d == Dataset::population ? SamplingRule::population() : SamplingRule::synthetic();
  rule.join_context = join_context;
  switch (d) {
    case Dataset::matern:
    case Dataset::weakly_periodic: {
      const kernels::KernelSpec spec = *oracle_kernel(d);
      return [spec, rule](Rng& rng) { return gen_gp_task(spec, rule, rng); };
    }
    case Dataset::fourier:
      return [rule](Rng& rng) { return gen_fourier_task(rule, rng); };
    case Dataset::step:
      return [rule](Rng& rng) { return gen_step_task(rule, rng); };
    case Dataset::population:
      return [stats, rule](Rng& rng) {
        const PopulationTrajectory tr = simulate_accepted(rng, stats);
        return gen_population_task(tr, rule, rng);
      };
    case Dataset::temperature:
      break;
  }
  throw ContractViolation("dataset '" + to_string(d) + "' needs a data file");
}

}  // namespace npf::datagen
