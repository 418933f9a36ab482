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

#include "npf/training.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "npf/checkpoint.hpp"
#include "npf/errors.hpp"

namespace npf::training {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_floor(std::span<const double> sigma, const char* what) {
  for (double s : sigma)
    if (!(s >= models::kStdFloor))
      throw ContractViolation(std::string(what) + ": sigma below the decoder floor");
}

}  // namespace

// ---------------------------------------------------------------- losses

ad::Var nll_loss(const models::GaussianHead& head, std::span<const double> y) {
  NPF_REQUIRE(head.mean.shape() == head.std.shape(), "nll_loss: mean/std shape mismatch");
  NPF_REQUIRE(head.mean.size() == y.size(), "nll_loss: target size mismatch");
  NPF_REQUIRE(head.mean.shape().size() == 2, "nll_loss: expected (M x d_y) head");
  require_floor(head.std.values(), "nll_loss");
  ad::Tape& tape = head.mean.tape();
  const std::size_t m = head.mean.shape()[0];
  const std::size_t dy = head.mean.shape()[1];
  ad::Var target = tape.constant(head.mean.shape(), std::vector<double>(y.begin(), y.end()));
  ad::Var r = (target - head.mean) / head.std;
  ad::Var per = ad::scale(ad::square(r), 0.5) + ad::log(head.std);
  return ad::shift(ad::scale(ad::sum(per), 1.0 / static_cast<double>(m)),
                   kHalfLog2Pi * static_cast<double>(dy));
}

double nll_loss(const models::PredictiveDistribution& pred, std::span<const double> y) {
  NPF_REQUIRE(pred.size() == 1, "nll_loss: expected a single component");
  const auto& c = pred.components.front();
  NPF_REQUIRE(c.mean.size() == y.size() && c.std.size() == y.size(), "nll_loss: size mismatch");
  NPF_REQUIRE(pred.num_targets > 0, "nll_loss: no targets");
  require_floor(c.std, "nll_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = (y[i] - c.mean[i]) / c.std[i];
    total += 0.5 * r * r + std::log(c.std[i]) + kHalfLog2Pi;
  }
  return total / static_cast<double>(pred.num_targets);
}

ad::Var kl_diag(const models::LatentGaussian& q1, const models::LatentGaussian& q2) {
  NPF_REQUIRE(q1.mean.shape() == q2.mean.shape() && q1.std.shape() == q1.mean.shape() &&
                  q2.std.shape() == q2.mean.shape(),
              "kl_diag: shape mismatch");
  ad::Var diff = q1.mean - q2.mean;
  ad::Var ratio = (ad::square(q1.std) + ad::square(diff)) / ad::scale(ad::square(q2.std), 2.0);
  ad::Var per = ad::log(q2.std) - ad::log(q1.std) + ratio;
  return ad::shift(ad::sum(per), -0.5 * static_cast<double>(q1.mean.size()));
}

double kl_diag(std::span<const double> mu1, std::span<const double> sigma1,
               std::span<const double> mu2, std::span<const double> sigma2) {
  NPF_REQUIRE(mu1.size() == sigma1.size() && mu2.size() == sigma2.size() && mu1.size() == mu2.size(),
              "kl_diag: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double d = mu1[i] - mu2[i];
    kl += std::log(sigma2[i] / sigma1[i]) +
          (sigma1[i] * sigma1[i] + d * d) / (2.0 * sigma2[i] * sigma2[i]) - 0.5;
  }
  return kl;
}

ad::Var elbo_loss(nn::Scope& scope, models::NeuralProcess& model, const Task& task, Rng& rng) {
  const auto q_target = model.encode(scope, task.x_target, task.y_target);
  const auto q_context = model.encode_context(scope, task);
  ad::Var z = model.sample_latent(scope, q_target, rng);
  const auto head = model.decode(scope, z, task.x_target);
  return nll_loss(head, task.y_target) + kl_diag(q_target, q_context);
}

ad::Var elbo_loss(nn::Scope& scope, models::AttentiveNeuralProcess& model, const Task& task,
                  Rng& rng) {
  const auto q_target = model.encode(scope, task.x_target, task.y_target);
  const auto q_context = model.encode_context(scope, task);
  ad::Var z = model.sample_latent(scope, q_target, rng);
  const auto head = model.forward(scope, task, task.x_target, z);
  return nll_loss(head, task.y_target) + kl_diag(q_target, q_context);
}

// ---------------------------------------------------------------- optimiser

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.total_batches = 20000;
  c.batch_size = 64;
  c.decay_every = 200;
  return c;
}

void TrainConfig::validate() const {
  NPF_REQUIRE(total_batches > 0 && batch_size > 0 && decay_every > 0, "train: counts must be positive");
  NPF_REQUIRE(log_every > 0 && checkpoint_every > 0, "train: intervals must be positive");
  NPF_REQUIRE(lr >= 0.0 && std::isfinite(lr), "train: learning rate must be finite and non-negative");
  NPF_REQUIRE(gamma > 0.0 && gamma <= 1.0, "train: gamma must lie in (0, 1]");
  NPF_REQUIRE(train_samples == 1, "train: a single sample is used during training");
}

double TrainConfig::lr_at(std::uint64_t batches_done) const {
  return lr * std::pow(gamma, static_cast<double>(batches_done / decay_every));
}

OptimState OptimState::zeros(const nn::ParameterSet& params) {
  OptimState s;
  for (const auto& p : params.all()) {
    s.m.emplace_back(p.value.size(), 0.0);
    s.v.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adam_step(nn::ParameterSet& params, OptimState& state, double lr) {
  NPF_REQUIRE(state.m.size() == params.size() && state.v.size() == params.size(),
              "adam_step: optimiser state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(OptimState::beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(OptimState::beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    NPF_REQUIRE(m.size() == p.value.size() && v.size() == p.value.size() &&
                    p.grad.size() == p.value.size(),
                "adam_step: shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = OptimState::beta1 * m[i] + (1.0 - OptimState::beta1) * g;
      v[i] = OptimState::beta2 * v[i] + (1.0 - OptimState::beta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + OptimState::eps);
    }
  }
}

double batch_loss_and_grad(models::Model& model, std::span<const Task> tasks, Rng& rng) {
  NPF_REQUIRE(!tasks.empty(), "batch_loss_and_grad: empty batch");
  model.parameters().zero_grad();
  const double inv = 1.0 / static_cast<double>(tasks.size());
  double total = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    ad::Tape tape(true);
    nn::Scope scope(tape, model.parameters());
    ad::Var loss = model.training_loss(scope, tasks[i], rng);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw TrainingAborted("non-finite loss on task " + std::to_string(i) + " of the batch");
    tape.backward(ad::scale(loss, inv));
    total += value;
  }
  return total * inv;
}

// ---------------------------------------------------------------- loop

namespace {

nlohmann::json record_json(const LossRecord& r) {
  return {{"batch", r.batch}, {"lr", r.lr}, {"loss", r.loss}, {"seed", r.seed}};
}

void write_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : log) out << record_json(r).dump() << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string rng_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

std::vector<LossRecord> read_loss_log(const std::filesystem::path& path) {
  std::vector<LossRecord> log;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("loss") || !j["loss"].is_number()) continue;
    log.push_back({j.at("batch").get<std::uint64_t>(), j.at("lr").get<double>(),
                   j.at("loss").get<double>(), j.at("seed").get<std::uint64_t>()});
  }
  return log;
}

TrainResult train_run(models::Model& model, const datagen::TaskSource& source,
                      const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  NPF_REQUIRE(static_cast<bool>(source), "train_run: empty task source");
  const bool persist = !options.output_dir.empty();
  const auto log_path = options.output_dir / kLossLogFile;
  const auto ckpt_path = options.output_dir / kCheckpointFile;
  if (persist) std::filesystem::create_directories(options.output_dir);

  Rng rng(config.seed);
  OptimState state = OptimState::zeros(model.parameters());
  TrainResult result;

  if (persist && options.resume && std::filesystem::exists(ckpt_path)) {
    const auto data = checkpoint::load_checkpoint(ckpt_path);
    if (checkpoint::config_to_json(data.config) != checkpoint::config_to_json(model.config()))
      throw IncompatibleCheckpoint("checkpoint was written for a different model configuration");
    if (data.meta.count("seed") && data.meta.at("seed") != std::to_string(config.seed))
      throw IncompatibleCheckpoint("checkpoint was written with a different seed");
    checkpoint::restore_parameters(model, data);
    if (data.optimizer) state = *data.optimizer;
    std::istringstream(data.rng_state) >> rng;
    result.batches_done = result.resumed_from = data.batch;
    for (const auto& r : read_loss_log(log_path))
      if (r.batch <= data.batch) result.log.push_back(r);
    write_log(log_path, result.log);
  } else if (persist) {
    write_log(log_path, {});
  }

  auto save = [&] {
    if (!persist) return;
    checkpoint::save_checkpoint(ckpt_path, model, &state, result.batches_done, rng_string(rng),
                                {{"seed", std::to_string(config.seed)},
                                 {"batch_size", std::to_string(config.batch_size)},
                                 {"total_batches", std::to_string(config.total_batches)}});
  };

  std::ofstream log_out;
  if (persist) log_out.open(log_path, std::ios::app);

  auto abort = [&](const std::string& reason, std::uint64_t task_index, double loss) {
    nlohmann::json diag = {{"event", "abort"},
                           {"batch", result.batches_done + 1},
                           {"task", task_index},
                           {"reason", reason},
                           {"loss", std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(std::to_string(loss))},
                           {"seed", config.seed}};
    if (persist) log_out << diag.dump() << std::endl;
    throw TrainingAborted("training aborted at batch " + std::to_string(result.batches_done + 1) +
                          ", task " + std::to_string(task_index) + ": " + reason);
  };

  double window = 0.0;
  std::uint64_t window_batches = 0;
  std::vector<Task> batch(config.batch_size);
  while (result.batches_done < config.total_batches) {
    const double lr = config.lr_at(result.batches_done);
    model.parameters().zero_grad();
    const double inv = 1.0 / static_cast<double>(config.batch_size);
    double batch_loss = 0.0;
    for (std::uint64_t i = 0; i < config.batch_size; ++i) {
      Task task = source(rng);
      double value = 0.0;
      try {
        ad::Tape tape(true);
        nn::Scope scope(tape, model.parameters());
        ad::Var loss = model.training_loss(scope, task, rng);
        value = loss.item();
        if (!std::isfinite(value)) abort("non-finite loss", i, value);
        tape.backward(ad::scale(loss, inv));
      } catch (const SingularMatrixError& e) {
        abort(e.what(), i, std::nan(""));
      } catch (const DomainError& e) {
        abort(e.what(), i, std::nan(""));
      }
      batch_loss += value * inv;
    }
    adam_step(model.parameters(), state, lr);
    ++result.batches_done;
    window += batch_loss;
    ++window_batches;

    if (result.batches_done % config.log_every == 0) {
      LossRecord rec{result.batches_done, lr, window / static_cast<double>(window_batches), config.seed};
      window = 0.0;
      window_batches = 0;
      result.log.push_back(rec);
      if (persist) log_out << record_json(rec).dump() << std::endl;
      if (options.on_log) options.on_log(rec);
    }
    if (result.batches_done % config.checkpoint_every == 0) save();
  }
  if (result.batches_done % config.checkpoint_every != 0 || result.batches_done == result.resumed_from)
    save();
  return result;
}

}  // namespace npf::training
