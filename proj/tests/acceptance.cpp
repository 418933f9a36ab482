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


// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   npf_acceptance                    all criteria
//   npf_acceptance --criterion 5      a subset
//   npf_acceptance --artifacts DIR    trained-model directory for criterion 5

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "helpers.hpp"
#include "npf/checkpoint.hpp"
#include "npf/datagen.hpp"
#include "npf/dataio.hpp"
#include "npf/eval.hpp"
#include "npf/models.hpp"
#include "npf/training.hpp"
#include "properties.hpp"

namespace fs = std::filesystem;
using namespace npf;
using npf::test::Rng;

namespace {

constexpr std::size_t kEvalTasks = 2048;
constexpr std::size_t kW2Tasks = 512;
constexpr std::size_t kSamples = 20;
constexpr double kW2Reference = 4.294;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

std::string band(double v, double lo, double hi) {
  return fmt(v) + (v >= lo && v <= hi ? " in [" : " outside [") + fmt(lo) + ", " + fmt(hi) + "]";
}

const eval::EvalReport& report(const std::vector<eval::EvalReport>& reports, const std::string& metric) {
  for (const auto& r : reports)
    if (r.metric == metric) return r;
  throw std::runtime_error("evaluation produced no " + metric + " entry");
}

eval::EvalOptions ll_options() {
  eval::EvalOptions o;
  o.seeds = {0};
  o.tasks_per_seed = kEvalTasks;
  o.samples = kSamples;
  o.w2_samples = 0;
  o.reconstruction = false;
  return o;
}

/// Mean predictive LL on the 2048 evaluation tasks of seed 0.
eval::EvalReport ll_report(eval::Predictor& p, datagen::Dataset d) {
  const auto source = datagen::synthetic_source(d, nullptr, false);
  return report(eval::evaluate(p, source, std::nullopt, ll_options()), "predictive_ll");
}

std::string with_spread(const eval::EvalReport& r) {
  return fmt(r.mean) + " +/- " + fmt(r.spread) + " (" + r.spread_kind + ", " +
         std::to_string(r.task_count) + " tasks)";
}

class Suite {
 public:
  explicit Suite(fs::path artifacts) : artifacts_(std::move(artifacts)) {}

  Outcome oracle(datagen::Dataset d, double lo, double hi) {
    eval::GPBaseline p("gp-oracle", *datagen::oracle_kernel(d), eval::kBaselineNoise);
    const auto r = ll_report(p, d);
    return {r.mean >= lo && r.mean <= hi, "gp-oracle LL " + band(r.mean, lo, hi) + "; " + with_spread(r)};
  }

  Outcome eq_baseline() {
    const auto& r = eq_report();
    return {r.mean >= 0.75 && r.mean <= 1.30,
            "gp-eq LL " + band(r.mean, 0.75, 1.30) + "; " + with_spread(r)};
  }

  Outcome eq_w2() {
    eval::MarginalEqBaseline p(eval::kBaselineNoise);
    const auto source = datagen::synthetic_source(datagen::Dataset::matern, nullptr, false);
    eval::EvalOptions o = ll_options();
    o.tasks_per_seed = kW2Tasks;
    o.w2_samples = kSamples;
    o.w2_tasks = kW2Tasks;
    const auto r = report(eval::evaluate(p, source, datagen::oracle_kernel(datagen::Dataset::matern), o), "w2");
    const double lo = 0.75 * kW2Reference, hi = 1.25 * kW2Reference;
    return {r.mean >= lo && r.mean <= hi,
            "W2(gp-eq, gp-oracle) " + band(r.mean, lo, hi) + "; " + with_spread(r) + ", " +
                std::to_string(kSamples) + " samples per task"};
  }

  Outcome trained() {
    std::map<models::ModelKind, double> ll;
    std::string detail;
    for (auto kind : {models::ModelKind::gpconvcnp, models::ModelKind::convcnp}) {
      const auto name = models::to_string(kind);
      const fs::path dir = artifacts_ / (name + "-matern-seed0");
      if (fs::exists(dir / ".lock"))
        return {false, name + ": training in progress (" + (dir / ".lock").string() + " exists)"};
      auto model = models::make_model(models::ModelConfig::defaults(kind, 1), 0);
      {
        Lock lock(dir);
        training::TrainOptions opts;
        opts.output_dir = dir;
        opts.resume = true;
        const auto source = datagen::synthetic_source(datagen::Dataset::matern, nullptr, true);
        const auto res = training::train_run(*model, source, training::TrainConfig::desk_scale(), opts);
        detail += name + " trained " + std::to_string(res.batches_done) + " batches";
        if (res.resumed_from == res.batches_done) detail += " (loaded)";
      }
      eval::ModelPredictor p(*model);
      const auto r = ll_report(p, datagen::Dataset::matern);
      ll[kind] = r.mean;
      detail += ", LL " + with_spread(r) + "; ";
    }
    const double eq = eq_report().mean;
    const bool pass = ll[models::ModelKind::gpconvcnp] > eq && ll[models::ModelKind::convcnp] > 0.0;
    detail += "gpconvcnp " + fmt(ll[models::ModelKind::gpconvcnp]) + " vs gp-eq " + fmt(eq) +
              ", convcnp " + fmt(ll[models::ModelKind::convcnp]) + " vs 0";
    return {pass, detail};
  }

  Outcome properties() {
    std::vector<std::string> failed;
    std::ostringstream os;
    auto note = [&](const std::string& what, bool ok, const std::string& value) {
      if (!ok) failed.push_back(what);
      os << what << " " << value << "; ";
    };

    Rng rng(2024);
    double grad = 0.0;
    std::string grad_worst;
    for (const auto& c : test::primitive_cases()) {
      const double e = test::primitive_grad_error(c, rng, 100);
      if (e >= grad) {
        grad = e;
        grad_worst = c.name;
      }
    }
    note("autodiff", grad <= 1e-4, sci(grad) + " (" + grad_worst + ")");

    Rng gp_rng(7);
    const double gp = test::gp_conditioning_error(gp_rng, 50);
    note("gp-conditioning", gp <= 1e-8, sci(gp));

    Rng h_rng(3);
    const auto mismatches = test::hungarian_mismatches(h_rng, 7, 100);
    note("hungarian", mismatches == 0, std::to_string(mismatches) + "/700 mismatches");

    Rng m_rng(8);
    double perm = 0.0;
    for (auto kind : test::kAllModelKinds) perm = std::max(perm, test::permutation_error(kind, m_rng, 5));
    note("permutation", perm <= 1e-10, sci(perm));

    Rng s_rng(9);
    double shift = 0.0;
    for (auto kind : {models::ModelKind::convcnp, models::ModelKind::gpconvcnp})
      shift = std::max(shift, test::grid_shift_error(kind, s_rng));
    note("grid-shift", shift <= 1e-6, sci(shift));

    Rng g_rng(11);
    const double rate = test::gillespie_acceptance_rate(g_rng, 1000);
    note("gillespie-acceptance", rate >= 0.5 && rate <= 0.8, fmt(rate, 3));

    test::TempDir dir("npf-acceptance-ckpt");
    const bool exact = test::checkpoint_round_trip_exact(dir.path());
    note("checkpoint", exact, exact ? "bit-exact" : "differs");

    return {failed.empty(), os.str() + (failed.empty() ? "all within tolerance" : "failed: " + join(failed))};
  }

  Outcome generators() {
    std::vector<std::string> failed;
    std::ostringstream os;
    for (auto spec : {kernels::KernelSpec::matern52(0.5), kernels::KernelSpec::weakly_periodic()}) {
      Rng rng(4);
      const double e = test::prior_variance_error(spec, rng, 10000);
      const auto name = kernels::to_string(spec.kind);
      if (e > 0.05) failed.push_back(name);
      os << name << " prior variance error " << fmt(e) << "; ";
    }
    Rng f_rng(6), s_rng(7);
    const auto fourier = test::fourier_violations(f_rng, 10000);
    const auto step = test::step_violations(s_rng, 10000);
    if (fourier) failed.push_back("fourier");
    if (step) failed.push_back("step");
    os << "fourier " << fourier << "/10000 violations; step " << step << "/10000 violations";
    return {failed.empty(), os.str() + (failed.empty() ? "" : "; failed: " + join(failed))};
  }

  Outcome pipelines() {
    test::TempDir dir("npf-acceptance-temperature");
    Rng t_rng(1), p_rng(13), l_rng(5);
    const auto temperature =
        test::temperature_violations(test::write_temperature_csv(dir.path(), 1500), t_rng, 1000);
    const auto population = test::population_violations(p_rng, 1000);

    const auto data = dataio::load_lynx_hare(NPF_SOURCE_DIR "/data/lynx_hare.csv");
    const auto series = dataio::normalize_lynx_hare(data, dataio::estimate_population_reference(200, 0));
    std::size_t lynx = 0;
    for (int k = 0; k < 1000; ++k) {
      const Task t = dataio::lynx_hare_random_task(series, l_rng);
      t.validate();
      if (t.y_dim != 2 || t.num_context() < 3 || t.num_context() + t.num_target() != series.size()) ++lynx;
    }
    const std::size_t third = series.size() / 3;
    const Task block = dataio::lynx_hare_contiguous_task(series, third, third);
    for (std::size_t i = 0; i < third; ++i)
      if (block.x_target[i] != series.x[third + i]) ++lynx;
    const bool pass = temperature == 0 && population == 0 && lynx == 0;
    return {pass, "temperature " + std::to_string(temperature) + "/2000 violations (synthetic city file); population " +
                      std::to_string(population) + "/1000 violations; lynx-hare " + std::to_string(lynx) +
                      "/1000 violations"};
  }

 private:
  // Same convention as the command-line tool: a .lock file marks a directory
  // that a process is writing.
  class Lock {
   public:
    explicit Lock(const fs::path& dir) : path_(dir / ".lock") {
      fs::create_directories(dir);
      std::FILE* f = std::fopen(path_.c_str(), "wx");
      if (!f) throw std::runtime_error(path_.string() + " exists");
      std::fclose(f);
    }
    ~Lock() {
      std::error_code ec;
      fs::remove(path_, ec);
    }
    Lock(const Lock&) = delete;
    Lock& operator=(const Lock&) = delete;

   private:
    fs::path path_;
  };

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ", ") + p;
    return out;
  }

  const eval::EvalReport& eq_report() {
    if (!eq_) {
      eval::MarginalEqBaseline p(eval::kBaselineNoise);
      eq_ = ll_report(p, datagen::Dataset::matern);
    }
    return *eq_;
  }

  fs::path artifacts_;
  std::optional<eval::EvalReport> eq_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"npf acceptance suite"};
  std::vector<int> only;
  const char* env_dir = std::getenv("NPF_ACCEPTANCE_DIR");
  std::string artifacts = env_dir ? env_dir : NPF_ACCEPTANCE_DEFAULT_DIR;
  app.add_option("--criterion", only, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));
  app.add_option("--artifacts", artifacts, "Directory holding <model>-matern-seed0 training runs");
  CLI11_PARSE(app, argc, argv);

  Suite suite(artifacts);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle GP on Matern-5/2 tasks", [&] { return suite.oracle(datagen::Dataset::matern, 1.75, 2.10); }},
      {"oracle GP on weakly periodic tasks",
       [&] { return suite.oracle(datagen::Dataset::weakly_periodic, 1.70, 2.05); }},
      {"fitted EQ GP on Matern-5/2 tasks", [&] { return suite.eq_baseline(); }},
      {"W2 between EQ GP and oracle samples", [&] { return suite.eq_w2(); }},
      {"desk-scale GP-ConvCNP and ConvCNP training", [&] { return suite.trained(); }},
      {"property suite", [&] { return suite.properties(); }},
      {"generator statistics", [&] { return suite.generators(); }},
      {"temperature and population pipelines", [&] { return suite.pipelines(); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.pass) ++failures;
    std::cout << "criterion " << id << " " << (out.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
              << ": " << out.detail << " [" << fmt(secs, 1) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
