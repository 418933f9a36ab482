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

#include "npf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "npf/errors.hpp"
#include "npf/gp.hpp"

namespace npf::eval {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Task with_context_as_targets(const Task& task) {
  Task t = task;
  t.x_target = task.x_context;
  t.y_target = task.y_context;
  return t;
}

}  // namespace

double predictive_ll(const models::PredictiveDistribution& pred, std::span<const double> y) {
  NPF_REQUIRE(pred.size() >= 1, "predictive_ll: empty mixture");
  NPF_REQUIRE(pred.num_targets > 0, "predictive_ll: no targets");
  const std::size_t dy = pred.y_dim;
  NPF_REQUIRE(y.size() == pred.num_targets * dy, "predictive_ll: target size mismatch");
  for (const auto& c : pred.components)
    NPF_REQUIRE(c.mean.size() == y.size() && c.std.size() == y.size(),
                "predictive_ll: component size mismatch");
  const double log_s = std::log(static_cast<double>(pred.size()));
  std::vector<double> terms(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.num_targets; ++i) {
    for (std::size_t s = 0; s < pred.size(); ++s) {
      const auto& c = pred.components[s];
      double lp = 0.0;
      for (std::size_t d = 0; d < dy; ++d) {
        const std::size_t k = i * dy + d;
        const double r = (y[k] - c.mean[k]) / c.std[k];
        lp -= 0.5 * r * r + std::log(c.std[k]) + kHalfLog2Pi;
      }
      terms[s] = lp;
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    total += mx + std::log(acc) - log_s;
  }
  return total / static_cast<double>(pred.num_targets);
}

double recon_rmse(std::span<const double> predicted_mean, std::span<const double> y) {
  NPF_REQUIRE(predicted_mean.size() == y.size(), "recon_rmse: size mismatch");
  NPF_REQUIRE(!y.empty(), "recon_rmse: no points");
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (predicted_mean[i] - y[i]) * (predicted_mean[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

Assignment hungarian(const Eigen::MatrixXd& cost) {
  NPF_REQUIRE(cost.rows() == cost.cols(), "hungarian: cost matrix must be square");
  NPF_REQUIRE(cost.allFinite(), "hungarian: costs must be finite");
  const auto n = static_cast<std::size_t>(cost.rows());
  Assignment a;
  if (n == 0) return a;
  // Potentials u (rows), v (columns); p[j] is the row matched to column j,
  // all 1-based with column 0 as the sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  a.to.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) a.to[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i)
    a.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a.to[i]));
  return a;
}

double wasserstein2(const Curves& p, const Curves& q) {
  NPF_REQUIRE(p.size() == q.size(), "wasserstein2: sample sets differ in size");
  NPF_REQUIRE(!p.empty(), "wasserstein2: empty sample sets");
  const std::size_t len = p.front().size();
  for (const auto& c : p) NPF_REQUIRE(c.size() == len, "wasserstein2: curve length mismatch");
  for (const auto& c : q) NPF_REQUIRE(c.size() == len, "wasserstein2: curve length mismatch");
  const auto n = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double diff = p[static_cast<std::size_t>(i)][k] - q[static_cast<std::size_t>(j)][k];
        d += diff * diff;
      }
      cost(i, j) = d;
    }
  return std::sqrt(std::max(0.0, hungarian(cost).cost));
}

// ---------------------------------------------------------------- predictors

std::string ModelPredictor::name() const { return models::to_string(model_.kind()); }

models::PredictiveDistribution ModelPredictor::predict(const Task& task, std::size_t samples, Rng& rng) {
  return models::forward(model_, task, samples, rng);
}

std::optional<Curves> ModelPredictor::sample_curves(const Task& task, std::size_t count, Rng& rng) {
  if (model_.kind() == models::ModelKind::convcnp) return std::nullopt;
  const auto pred = models::forward(model_, task, count, rng);
  Curves curves;
  for (const auto& c : pred.components) curves.push_back(c.mean);
  return curves;
}

namespace {

std::vector<gp::PosteriorGaussian> per_dim_posteriors(const Task& task, const kernels::KernelSpec& spec,
                                                      double noise) {
  std::vector<gp::PosteriorGaussian> out;
  for (std::size_t d = 0; d < task.y_dim; ++d) {
    const auto yc = task.y_context_column(d);
    out.push_back(gp::gp_posterior(task.x_context, yc, spec, noise, task.x_target));
  }
  return out;
}

}  // namespace

models::PredictiveDistribution GPBaseline::predict(const Task& task, std::size_t, Rng&) {
  const auto posts = per_dim_posteriors(task, spec_, noise_);
  const std::size_t m = task.num_target(), dy = task.y_dim;
  models::PredictiveDistribution pred;
  pred.num_targets = m;
  pred.y_dim = dy;
  models::PredictiveDistribution::Component c;
  c.mean.resize(m * dy);
  c.std.resize(m * dy);
  for (std::size_t d = 0; d < dy; ++d) {
    const auto marg = gp::gp_marginals(posts[d]);
    for (std::size_t i = 0; i < m; ++i) {
      c.mean[i * dy + d] = marg.mean[static_cast<Eigen::Index>(i)];
      c.std[i * dy + d] = std::sqrt(marg.variance[static_cast<Eigen::Index>(i)]);
    }
  }
  pred.components.push_back(std::move(c));
  return pred;
}

std::optional<Curves> GPBaseline::sample_curves(const Task& task, std::size_t count, Rng& rng) {
  const auto posts = per_dim_posteriors(task, spec_, noise_);
  const std::size_t m = task.num_target(), dy = task.y_dim;
  Curves curves(count, std::vector<double>(m * dy));
  for (std::size_t d = 0; d < dy; ++d) {
    const auto draws = gp::gp_sample(posts[d], count, rng);
    for (std::size_t s = 0; s < count; ++s)
      for (std::size_t i = 0; i < m; ++i) curves[s][i * dy + d] = draws[s][static_cast<Eigen::Index>(i)];
  }
  return curves;
}

std::vector<double> eq_lengthscale_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 40; ++k) grid.push_back(0.05 * k);
  return grid;
}

double select_eq_lengthscale(const Task& task, double noise) {
  double best = -std::numeric_limits<double>::infinity();
  double chosen = 0.0;
  for (double l : eq_lengthscale_grid()) {
    double lml = 0.0;
    for (std::size_t d = 0; d < task.y_dim; ++d)
      lml += gp::log_marginal_likelihood(task.x_context, task.y_context_column(d), kernels::KernelSpec::eq(l),
                                         noise);
    if (lml > best) {
      best = lml;
      chosen = l;
    }
  }
  return chosen;
}

GPBaseline MarginalEqBaseline::fitted(const Task& task) const {
  return GPBaseline("gp-eq", kernels::KernelSpec::eq(select_eq_lengthscale(task, noise_)), noise_);
}

models::PredictiveDistribution MarginalEqBaseline::predict(const Task& task, std::size_t samples, Rng& rng) {
  return fitted(task).predict(task, samples, rng);
}

std::optional<Curves> MarginalEqBaseline::sample_curves(const Task& task, std::size_t count, Rng& rng) {
  return fitted(task).sample_curves(task, count, rng);
}

LengthscaleFit fit_eq_lengthscale(const datagen::TaskSource& source, std::size_t tasks,
                                  std::uint64_t seed, double noise) {
  NPF_REQUIRE(tasks > 0, "fit_eq_lengthscale: no tasks");
  // Held-out tasks come from their own stream, disjoint from evaluation seeds.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x66697421u};
  Rng rng(seq);
  std::vector<Task> held_out;
  for (std::size_t i = 0; i < tasks; ++i) held_out.push_back(source(rng));
  LengthscaleFit fit;
  fit.grid = eq_lengthscale_grid();
  double best = -std::numeric_limits<double>::infinity();
  Rng unused(0);
  for (double l : fit.grid) {
    GPBaseline gp("gp-eq", kernels::KernelSpec::eq(l), noise);
    double total = 0.0;
    std::size_t ok = 0;
    for (const auto& t : held_out) {
      try {
        total += predictive_ll(gp.predict(t, 1, unused), t.y_target);
        ++ok;
      } catch (const SingularMatrixError&) {
      }
    }
    const double ll = ok ? total / static_cast<double>(ok) : -std::numeric_limits<double>::infinity();
    fit.mean_ll.push_back(ll);
    if (ll > best) {
      best = ll;
      fit.lengthscale = l;
    }
  }
  return fit;
}

// ---------------------------------------------------------------- harness

Rng evaluation_task_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6576616cu};
  return Rng(seq);
}

TaskMetrics evaluate_task(Predictor& predictor, const Task& task,
                          const std::optional<kernels::KernelSpec>& oracle, const EvalOptions& options,
                          bool with_w2, Rng& rng) {
  TaskMetrics m;
  m.ll = predictive_ll(predictor.predict(task, options.samples, rng), task.y_target);
  if (options.reconstruction) {
    const Task recon = with_context_as_targets(task);
    m.rmse = recon_rmse(predictor.predict(recon, options.samples, rng).mixture_mean(), recon.y_target);
  }
  if (with_w2 && oracle && options.w2_samples > 0) {
    if (auto curves = predictor.sample_curves(task, options.w2_samples, rng)) {
      GPBaseline truth("gp-oracle", *oracle, kBaselineNoise);
      m.w2 = wasserstein2(*curves, *truth.sample_curves(task, options.w2_samples, rng));
    }
  }
  return m;
}

std::vector<EvalReport> evaluate(Predictor& predictor, const datagen::TaskSource& source,
                                 const std::optional<kernels::KernelSpec>& oracle,
                                 const EvalOptions& options) {
  NPF_REQUIRE(!options.seeds.empty(), "evaluate: at least one seed required");
  NPF_REQUIRE(options.tasks_per_seed > 0, "evaluate: task count must be positive");
  NPF_REQUIRE(options.samples > 0, "evaluate: sample count must be positive");

  struct Series {
    std::vector<double> per_seed;
    std::vector<double> all;
    std::size_t count = 0;
  };
  Series ll, rmse, w2;
  std::size_t failed = 0;

  for (std::uint64_t seed : options.seeds) {
    Rng task_rng = evaluation_task_rng(seed);
    Rng pred_rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<double> s_ll, s_rmse, s_w2;
    for (std::size_t t = 0; t < options.tasks_per_seed; ++t) {
      Task task;
      try {
        task = source(task_rng);
      } catch (const GenerationError&) {
        ++failed;
        continue;
      }
      const bool with_w2 = options.w2_tasks == 0 || t < options.w2_tasks;
      try {
        const auto m = evaluate_task(predictor, task, oracle, options, with_w2, pred_rng);
        s_ll.push_back(m.ll);
        if (m.rmse) s_rmse.push_back(*m.rmse);
        if (m.w2) s_w2.push_back(*m.w2);
      } catch (const SingularMatrixError&) {
        ++failed;
      }
    }
    for (auto [series, values] : {std::pair{&ll, &s_ll}, {&rmse, &s_rmse}, {&w2, &s_w2}}) {
      if (values->empty()) continue;
      series->per_seed.push_back(mean_of(*values));
      series->all.insert(series->all.end(), values->begin(), values->end());
      series->count += values->size();
    }
  }

  std::vector<EvalReport> reports;
  auto add = [&](const std::string& metric, const Series& s, std::size_t samples) {
    if (s.per_seed.empty()) return;
    EvalReport r;
    r.predictor = predictor.name();
    r.metric = metric;
    r.per_seed = s.per_seed;
    r.mean = mean_of(s.per_seed);
    if (s.per_seed.size() == 1) {
      r.spread = sample_std(s.all) / std::sqrt(static_cast<double>(s.all.size()));
      r.spread_kind = "sem_tasks";
    } else if (predictor.is_gp_baseline()) {
      r.spread = sample_std(s.per_seed) / std::sqrt(static_cast<double>(s.per_seed.size()));
      r.spread_kind = "sem";
    } else {
      r.spread = sample_std(s.per_seed);
      r.spread_kind = "std";
    }
    r.task_count = s.count;
    r.samples_per_task = samples;
    r.failed = failed;
    reports.push_back(std::move(r));
  };
  add("predictive_ll", ll, options.samples);
  add("recon_rmse", rmse, options.samples);
  add("w2", w2, options.w2_samples);
  return reports;
}

void append_reports_jsonl(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                          const std::string& dataset) {
  std::ofstream out(path, std::ios::app);
  for (const auto& r : reports) {
    nlohmann::json j = {{"predictor", r.predictor},       {"dataset", dataset},
                        {"metric", r.metric},             {"per_seed", r.per_seed},
                        {"mean", r.mean},                 {"spread", r.spread},
                        {"spread_kind", r.spread_kind},   {"task_count", r.task_count},
                        {"samples_per_task", r.samples_per_task}, {"failed", r.failed}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                       const std::string& dataset) {
  std::ofstream out(path, std::ios::trunc);
  out << kReportCsvHeader << '\n';
  out.precision(17);
  for (const auto& r : reports)
    out << r.predictor << ',' << dataset << ',' << r.metric << ',' << r.mean << ',' << r.spread << ','
        << r.spread_kind << ',' << r.per_seed.size() << ',' << r.task_count << ','
        << r.samples_per_task << ',' << r.failed << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace npf::eval
