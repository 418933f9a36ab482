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

// npf: generate tasks, train models and evaluate models or GP baselines.
//
//   npf generate --dataset matern --tasks 100 --seed 1
//   npf train --model gpconvcnp --dataset matern --seed 0 --desk-scale
//   npf eval --baseline gp-oracle --dataset matern --seeds 0
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "npf/checkpoint.hpp"
#include "npf/config.hpp"
#include "npf/datagen.hpp"
#include "npf/dataio.hpp"
#include "npf/errors.hpp"
#include "npf/eval.hpp"
#include "npf/plot.hpp"
#include "npf/training.hpp"

namespace fs = std::filesystem;
using namespace npf;

namespace {

// Exclusive ownership of an output directory for the life of a command.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw std::runtime_error("output directory " + dir.string() +
                               " is in use (remove " + path_.string() + " if no command is running)");
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

datagen::Dataset dataset_of(const RunConfig& cfg) {
  const auto d = datagen::dataset_from_string(cfg.str("dataset"));
  if (!d) throw UsageError("unknown dataset '" + cfg.str("dataset") + "'");
  return *d;
}

std::size_t y_dim_of(datagen::Dataset d) { return d == datagen::Dataset::population ? 2 : 1; }

fs::path output_dir(const RunConfig& cfg, const std::string& command, const std::string& who) {
  if (cfg.is_set("output")) return cfg.str("output");
  const char* root = std::getenv("NPF_OUTPUT_ROOT");
  std::string name = command + "-" + cfg.str("dataset");
  if (!who.empty()) name += "-" + who;
  if (cfg.is_set("seeds")) name += "-seed" + cfg.str("seeds");
  for (char& c : name)
    if (c == ',') c = '_';
  return fs::path(root && *root ? root : "runs") / name;
}

// Temperature needs `data` and a `mode`; population accepts the lynx-hare
// table through `data` with mode contiguous or random.
datagen::TaskSource make_source(const RunConfig& cfg, dataio::Split split, bool training,
                                datagen::SimulationStats* stats = nullptr) {
  const auto d = dataset_of(cfg);
  const std::string& mode = cfg.str("mode");
  if (d == datagen::Dataset::temperature) {
    if (!cfg.is_set("data")) throw UsageError("temperature needs data=<csv path>");
    dataio::TemperatureMode m = dataio::TemperatureMode::interpolation;
    if (mode == "extrapolation") m = dataio::TemperatureMode::extrapolation;
    else if (!mode.empty() && mode != "interpolation")
      throw UsageError("temperature mode must be interpolation or extrapolation");
    std::vector<std::string> warnings;
    auto cities = dataio::load_temperature_csv(cfg.str("data"), &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    return dataio::temperature_source(std::move(cities), split, m, training);
  }
  if (d == datagen::Dataset::population && (mode == "contiguous" || mode == "random")) {
    if (!cfg.is_set("data")) throw UsageError("lynx-hare evaluation needs data=<csv path>");
    const auto ref = dataio::estimate_population_reference(200, 0);
    const auto series = dataio::normalize_lynx_hare(dataio::load_lynx_hare(cfg.str("data")), ref);
    if (mode == "contiguous") {
      const std::size_t len = series.size() / 3;
      const Task task = dataio::lynx_hare_contiguous_task(series, len, len);
      return [task](datagen::Rng&) { return task; };
    }
    return [series](datagen::Rng& rng) { return dataio::lynx_hare_random_task(series, rng); };
  }
  if (!mode.empty()) throw UsageError("mode '" + mode + "' does not apply to " + cfg.str("dataset"));
  return datagen::synthetic_source(d, stats, training);
}

void write_tasks_csv(const fs::path& path, const std::vector<Task>& tasks) {
  std::ofstream out(path, std::ios::trunc);
  out.precision(17);
  const std::size_t dy = tasks.empty() ? 1 : tasks.front().y_dim;
  out << "task,role,x";
  for (std::size_t d = 0; d < dy; ++d) out << ",y" << d;
  out << '\n';
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    auto rows = [&](const char* role, const std::vector<double>& xs, const std::vector<double>& ys) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        out << t << ',' << role << ',' << xs[i];
        for (std::size_t d = 0; d < dy; ++d) out << ',' << ys[i * dy + d];
        out << '\n';
      }
    };
    rows("context", tasks[t].x_context, tasks[t].y_context);
    rows("target", tasks[t].x_target, tasks[t].y_target);
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

int cmd_generate(RunConfig cfg) {
  const auto seeds = cfg.seeds();
  if (seeds.size() != 1) throw UsageError("generate needs exactly one seed");
  const auto dataset = dataset_of(cfg);
  const fs::path dir = output_dir(cfg, "generate", "");
  DirectoryLock lock(dir);
  cfg.set("output", dir.string());
  cfg.write(dir / "config.txt");

  datagen::SimulationStats stats;
  const auto source = make_source(cfg, dataio::Split::train, true, &stats);
  datagen::Rng rng(seeds.front());
  std::vector<Task> tasks;
  for (std::uint64_t i = 0; i < cfg.uint("tasks"); ++i) tasks.push_back(source(rng));
  write_tasks_csv(dir / "tasks.csv", tasks);

  nlohmann::json manifest = {{"dataset", cfg.str("dataset")},
                             {"seed", seeds.front()},
                             {"tasks", tasks.size()},
                             {"y_dim", tasks.empty() ? 1 : tasks.front().y_dim},
                             {"file", "tasks.csv"},
                             {"columns", tasks.empty() || tasks.front().y_dim == 1
                                             ? std::vector<std::string>{"task", "role", "x", "y0"}
                                             : std::vector<std::string>{"task", "role", "x", "y0", "y1"}}};
  if (dataset == datagen::Dataset::population) {
    manifest["simulations"] = stats.attempts;
    manifest["accepted"] = stats.accepted;
    manifest["acceptance_rate"] = stats.acceptance_rate();
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::cout << "wrote " << tasks.size() << " tasks to " << (dir / "tasks.csv").string() << '\n';
  if (dataset == datagen::Dataset::population)
    std::cout << "acceptance rate " << stats.acceptance_rate() << '\n';
  return 0;
}

int cmd_train(RunConfig cfg) {
  const auto seeds = cfg.seeds();
  if (seeds.size() != 1) throw UsageError("train needs exactly one seed");
  const auto kind = models::model_kind_from_string(cfg.str("model"));
  if (!kind) throw UsageError("unknown or missing model '" + cfg.str("model") + "'");
  const auto dataset = dataset_of(cfg);
  const auto tc = cfg.train_config();
  tc.validate();
  // Pin the resolved schedule so the config file alone reproduces the run.
  cfg.set("total_batches", std::to_string(tc.total_batches));
  cfg.set("batch_size", std::to_string(tc.batch_size));
  cfg.set("lr", nlohmann::json(tc.lr).dump());
  cfg.set("gamma", nlohmann::json(tc.gamma).dump());
  cfg.set("decay_every", std::to_string(tc.decay_every));
  cfg.set("log_every", std::to_string(tc.log_every));
  cfg.set("checkpoint_every", std::to_string(tc.checkpoint_every));

  const fs::path dir = output_dir(cfg, "train", cfg.str("model"));
  DirectoryLock lock(dir);
  cfg.set("output", dir.string());
  cfg.write(dir / "config.txt");

  const auto source = make_source(cfg, dataio::Split::train, true);
  auto model = models::make_model(models::ModelConfig::defaults(*kind, y_dim_of(dataset)), seeds.front());
  training::TrainOptions opts;
  opts.output_dir = dir;
  opts.on_log = [&](const training::LossRecord& r) {
    std::cerr << "batch " << r.batch << "/" << tc.total_batches << " lr " << r.lr << " loss " << r.loss
              << std::endl;
  };
  const auto result = training::train_run(*model, source, tc, opts);
  if (result.resumed_from > 0) std::cout << "resumed at batch " << result.resumed_from << '\n';
  std::cout << "trained " << result.batches_done << " batches; checkpoint "
            << (dir / training::kCheckpointFile).string() << '\n';
  return 0;
}

int cmd_eval(RunConfig cfg) {
  const auto seeds = cfg.seeds();
  if (seeds.empty()) throw UsageError("eval needs seeds=<list>");
  const auto dataset = dataset_of(cfg);
  const std::string baseline = cfg.str("baseline");
  if (baseline.empty() == !cfg.is_set("checkpoint"))
    throw UsageError("eval needs exactly one of --baseline or --checkpoint");

  std::unique_ptr<models::Model> model;
  std::unique_ptr<eval::Predictor> predictor;
  std::string who = baseline;
  const auto oracle = datagen::oracle_kernel(dataset);
  if (!baseline.empty()) {
    if (baseline == "gp-oracle") {
      if (!oracle) throw UsageError("gp-oracle needs a GP dataset (matern or weakly_periodic)");
      predictor = std::make_unique<eval::GPBaseline>("gp-oracle", *oracle, eval::kBaselineNoise);
    } else if (baseline != "gp-eq") {
      throw UsageError("unknown baseline '" + baseline + "' (gp-oracle or gp-eq)");
    }
  } else {
    model = checkpoint::load_model(cfg.str("checkpoint"));
    if (model->config().y_dim != y_dim_of(dataset))
      throw UsageError("checkpoint output dimension does not match dataset " + cfg.str("dataset"));
    predictor = std::make_unique<eval::ModelPredictor>(*model);
    who = models::to_string(model->kind());
  }

  const fs::path dir = output_dir(cfg, "eval", who);
  DirectoryLock lock(dir);
  cfg.set("output", dir.string());
  cfg.write(dir / "config.txt");

  const auto source = make_source(cfg, dataio::Split::test, false);
  if (baseline == "gp-eq" && cfg.str("eq_fit") == "marginal") {
    predictor = std::make_unique<eval::MarginalEqBaseline>(eval::kBaselineNoise);
  } else if (baseline == "gp-eq" && cfg.str("eq_fit") == "heldout") {
    const auto fit = eval::fit_eq_lengthscale(source, cfg.uint("eq_fit_tasks"), seeds.front());
    std::cout << "gp-eq lengthscale " << fit.lengthscale << '\n';
    nlohmann::json j = {{"lengthscale", fit.lengthscale}, {"grid", fit.grid}, {"mean_ll", fit.mean_ll}};
    std::ofstream(dir / "eq_fit.json") << j.dump(2) << '\n';
    predictor = std::make_unique<eval::GPBaseline>("gp-eq", kernels::KernelSpec::eq(fit.lengthscale),
                                                   eval::kBaselineNoise);
  } else if (baseline == "gp-eq") {
    throw UsageError("eq_fit must be marginal or heldout");
  }

  eval::EvalOptions opts;
  opts.seeds = seeds;
  opts.tasks_per_seed = cfg.uint("tasks");
  opts.samples = cfg.uint("samples");
  opts.w2_samples = cfg.uint("w2_samples");
  opts.w2_tasks = cfg.uint("w2_tasks");
  opts.reconstruction = !(dataset == datagen::Dataset::temperature && cfg.str("mode") == "extrapolation");
  const auto reports = eval::evaluate(*predictor, source, oracle, opts);
  fs::remove(dir / "reports.jsonl");
  eval::append_reports_jsonl(dir / "reports.jsonl", reports, cfg.str("dataset"));
  eval::write_reports_csv(dir / "report.csv", reports, cfg.str("dataset"));
  for (const auto& r : reports)
    std::cout << r.predictor << ' ' << r.metric << ' ' << r.mean << " +- " << r.spread << " (" << r.spread_kind
              << ", " << r.task_count << " tasks)\n";

  const std::uint64_t plots = cfg.uint("plot");
  if (plots > 0) {
    datagen::Rng task_rng = eval::evaluation_task_rng(seeds.front());
    datagen::Rng rng(seeds.front());
    for (std::uint64_t k = 0; k < plots; ++k) {
      const Task task = source(task_rng);
      for (std::size_t d = 0; d < task.y_dim; ++d) {
        const auto data = plot::build_plot_data(*predictor, task, d, 10, rng);
        const std::string stem = "plot_" + std::to_string(k) + "_dim" + std::to_string(d);
        plot::write_csv(dir / (stem + ".csv"), data);
        plot::write_svg(dir / (stem + ".svg"), data);
      }
    }
    std::cout << "wrote " << plots << " plot(s) to " << dir.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-process training and evaluation on synthetic and real time series"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file, dataset, model, seeds, output, data, mode, baseline, ckpt;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> tasks, total_batches, batch_size, plot_count, samples;
  std::optional<std::uint64_t> seed;
  bool desk = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key=value run configuration file");
    sub->add_option("--dataset", dataset, "matern, weakly_periodic, fourier, step, temperature, population");
    sub->add_option("--mode", mode, "interpolation/extrapolation (temperature), contiguous/random (lynx-hare)");
    sub->add_option("--data", data, "data file for temperature or lynx-hare");
    sub->add_option("--output", output, "output directory (default $NPF_OUTPUT_ROOT/<command>-...)");
    sub->add_option("--set", overrides, "extra key=value configuration entries");
  };
  auto* gen = app.add_subcommand("generate", "write a columnar task file and manifest");
  common(gen);
  gen->add_option("--tasks", tasks, "number of tasks");
  gen->add_option("--seed", seed, "generator seed");

  auto* train = app.add_subcommand("train", "train a model, resuming from its checkpoint");
  common(train);
  train->add_option("--model", model, "np, anp, convcnp or gpconvcnp");
  train->add_option("--seed", seed, "training seed");
  train->add_flag("--desk-scale", desk, "20000 batches of 64, decay every 200");
  train->add_option("--total-batches", total_batches, "override the number of training batches");
  train->add_option("--batch-size", batch_size, "override the tasks per batch");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint or a GP baseline");
  common(ev);
  ev->add_option("--checkpoint", ckpt, "trained model checkpoint");
  ev->add_option("--baseline", baseline, "gp-oracle or gp-eq");
  ev->add_option("--seeds", seeds, "comma-separated evaluation seeds");
  ev->add_option("--tasks", tasks, "tasks per seed");
  ev->add_option("--samples", samples, "Monte-Carlo samples per task");
  ev->add_option("--plot", plot_count, "write prediction plots for this many tasks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_file.empty()) cfg = RunConfig::load(config_file);
    auto put = [&](const char* key, const std::string& v) {
      if (!v.empty()) cfg.set(key, v);
    };
    put("dataset", dataset);
    put("mode", mode);
    put("data", data);
    put("output", output);
    put("model", model);
    put("seeds", seeds);
    put("baseline", baseline);
    put("checkpoint", ckpt);
    if (seed) cfg.set("seeds", std::to_string(*seed));
    if (tasks) cfg.set("tasks", std::to_string(*tasks));
    if (samples) cfg.set("samples", std::to_string(*samples));
    if (plot_count) cfg.set("plot", std::to_string(*plot_count));
    if (total_batches) cfg.set("total_batches", std::to_string(*total_batches));
    if (batch_size) cfg.set("batch_size", std::to_string(*batch_size));
    if (desk) cfg.set("desk_scale", "true");
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }

    if (*gen) return cmd_generate(cfg);
    if (*train) return cmd_train(cfg);
    return cmd_eval(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
