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

#include "npf/models.hpp"

#include <cmath>

#include "npf/kernels.hpp"
#include "npf/losses.hpp"

namespace npf::models {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::np: return "np";
    case ModelKind::anp: return "anp";
    case ModelKind::convcnp: return "convcnp";
    case ModelKind::gpconvcnp: return "gpconvcnp";
  }
  return "?";
}

std::optional<ModelKind> model_kind_from_string(const std::string& name) {
  for (ModelKind k : {ModelKind::np, ModelKind::anp, ModelKind::convcnp, ModelKind::gpconvcnp})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

ModelConfig ModelConfig::defaults(ModelKind kind, std::size_t y_dim) {
  ModelConfig c;
  c.kind = kind;
  c.y_dim = y_dim;
  return c;
}

void ModelConfig::validate() const {
  NPF_REQUIRE(y_dim >= 1, "model: y_dim must be positive");
  NPF_REQUIRE(hidden > 0 && latent > 0 && hidden_layers > 0, "model: empty MLP configuration");
  NPF_REQUIRE(heads > 0 && hidden % heads == 0, "model: attention heads must divide hidden width");
  NPF_REQUIRE(!channel_plan.empty(), "model: empty channel plan");
  NPF_REQUIRE(kernel_width % 2 == 1, "model: convolution width must be odd");
  NPF_REQUIRE(points_per_unit > 0.0 && grid_margin >= 0.0, "model: invalid grid settings");
  NPF_REQUIRE(init_lengthscale > 0.0 && init_noise > 0.0, "model: invalid initial GP settings");
}

std::vector<double> PredictiveDistribution::mixture_mean() const {
  NPF_REQUIRE(!components.empty(), "mixture_mean of empty mixture");
  std::vector<double> out(components.front().mean.size(), 0.0);
  for (const auto& c : components)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c.mean[i];
  for (double& v : out) v /= static_cast<double>(components.size());
  return out;
}

Grid build_grid(std::span<const double> x_context, std::span<const double> x_target,
                double points_per_unit, double margin) {
  NPF_REQUIRE(!x_context.empty() || !x_target.empty(), "build_grid: no inputs");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto xs : {x_context, x_target})
    for (double x : xs) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  Grid g;
  g.lo = lo - margin;
  g.hi = hi + margin;
  g.spacing = 1.0 / points_per_unit;
  // The small slack keeps the count stable when (hi - lo) * ppu is integral.
  const auto count =
      static_cast<std::size_t>(std::floor((g.hi - g.lo) * points_per_unit + 1e-9)) + 1;
  g.points.resize(count);
  for (std::size_t i = 0; i < count; ++i) g.points[i] = g.lo + static_cast<double>(i) * g.spacing;
  return g;
}

ad::Var positive_std(ad::Var raw) { return ad::shift(ad::softplus(raw), kStdFloor); }

namespace {

ad::Var pairs_matrix(ad::Tape& tape, std::span<const double> x, std::span<const double> y,
                     std::size_t y_dim) {
  NPF_REQUIRE(y.size() == x.size() * y_dim, "context outputs do not match inputs");
  std::vector<double> v(x.size() * (1 + y_dim));
  for (std::size_t i = 0; i < x.size(); ++i) {
    v[i * (1 + y_dim)] = x[i];
    for (std::size_t d = 0; d < y_dim; ++d) v[i * (1 + y_dim) + 1 + d] = y[i * y_dim + d];
  }
  return tape.constant({x.size(), 1 + y_dim}, std::move(v));
}

ad::Var column(ad::Tape& tape, std::span<const double> x) {
  return tape.constant({x.size(), 1}, std::vector<double>(x.begin(), x.end()));
}

GaussianHead split_head(ad::Var out, std::size_t y_dim) {
  return {ad::slice(out, 1, 0, y_dim), positive_std(ad::slice(out, 1, y_dim, y_dim))};
}

}  // namespace

// ---------------------------------------------------------------- NP

NeuralProcess::NeuralProcess(ModelConfig config, Rng& init) : NeuralProcess(std::move(config), init, 0) {}

NeuralProcess::NeuralProcess(ModelConfig config, Rng& init, std::size_t decoder_extra_inputs)
    : Model(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  latent_encoder_ = nn::Mlp::create(params_, "latent_encoder", 1 + c.y_dim, c.hidden,
                                    c.hidden_layers, 2 * c.latent, init);
  decoder_ = nn::Mlp::create(params_, "decoder", decoder_extra_inputs + c.latent + 1, c.hidden,
                             c.hidden_layers, 2 * c.y_dim, init);
}

LatentGaussian NeuralProcess::encode(nn::Scope& scope, std::span<const double> x,
                                     std::span<const double> y) {
  NPF_REQUIRE(!x.empty(), "np_encode: empty context");
  ad::Var h = latent_encoder_(scope, pairs_matrix(scope.tape(), x, y, config_.y_dim));
  ad::Var pooled = ad::mean(h, 0);
  const std::size_t l = config_.latent;
  return {ad::slice(pooled, 0, 0, l), positive_std(ad::slice(pooled, 0, l, l))};
}

LatentGaussian NeuralProcess::encode_context(nn::Scope& scope, const Task& task) {
  return encode(scope, task.x_context, task.y_context);
}

ad::Var NeuralProcess::sample_latent(nn::Scope& scope, const LatentGaussian& q, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(q.mean.size());
  for (double& e : eps) e = normal(rng);
  return q.mean + q.std * scope.tape().constant(q.mean.shape(), std::move(eps));
}

GaussianHead NeuralProcess::decode_with(nn::Scope& scope, std::optional<ad::Var> deterministic,
                                        ad::Var z, std::span<const double> x_target) {
  const std::size_t m = x_target.size();
  const std::size_t l = config_.latent;
  NPF_REQUIRE(z.size() == l, "np_decode: latent sample has wrong size");
  for (double v : z.values()) NPF_REQUIRE(std::isfinite(v), "np_decode: non-finite latent sample");
  std::vector<ad::Var> parts;
  if (deterministic) parts.push_back(*deterministic);
  parts.push_back(ad::broadcast(ad::reshape(z, {1, l}), {m, l}));
  parts.push_back(column(scope.tape(), x_target));
  return split_head(decoder_(scope, ad::concat(parts, 1)), config_.y_dim);
}

GaussianHead NeuralProcess::decode(nn::Scope& scope, ad::Var z, std::span<const double> x_target) {
  return decode_with(scope, std::nullopt, z, x_target);
}

std::vector<GaussianHead> NeuralProcess::predict(nn::Scope& scope, const Task& task,
                                                 std::size_t samples, Rng& rng) {
  NPF_REQUIRE(samples >= 1, "predict: at least one sample required");
  const LatentGaussian q = encode_context(scope, task);
  std::vector<GaussianHead> heads;
  for (std::size_t s = 0; s < samples; ++s)
    heads.push_back(decode(scope, sample_latent(scope, q, rng), task.x_target));
  return heads;
}

ad::Var NeuralProcess::training_loss(nn::Scope& scope, const Task& task, Rng& rng) {
  return training::elbo_loss(scope, *this, task, rng);
}

// ---------------------------------------------------------------- ANP

AttentiveNeuralProcess::AttentiveNeuralProcess(ModelConfig config, Rng& init)
    : NeuralProcess(config, init, config.hidden) {
  const auto& c = config_;
  deterministic_encoder_ = nn::Mlp::create(params_, "deterministic_encoder", 1 + c.y_dim,
                                           c.hidden, c.hidden_layers, c.hidden, init);
  attention_ =
      nn::MultiHeadAttention::create(params_, "attention", 1, 1, c.hidden, c.hidden, c.heads, init);
}

ad::Var AttentiveNeuralProcess::deterministic(nn::Scope& scope, const Task& task,
                                              std::span<const double> x_target) {
  NPF_REQUIRE(task.num_context() > 0, "anp_forward: empty context");
  ad::Tape& tape = scope.tape();
  ad::Var values =
      deterministic_encoder_(scope, pairs_matrix(tape, task.x_context, task.y_context, config_.y_dim));
  return attention_(scope, column(tape, x_target), column(tape, task.x_context), values);
}

GaussianHead AttentiveNeuralProcess::forward(nn::Scope& scope, const Task& task,
                                             std::span<const double> x_target, ad::Var z) {
  return decode_with(scope, deterministic(scope, task, x_target), z, x_target);
}

std::vector<GaussianHead> AttentiveNeuralProcess::predict(nn::Scope& scope, const Task& task,
                                                          std::size_t samples, Rng& rng) {
  NPF_REQUIRE(samples >= 1, "predict: at least one sample required");
  ad::Var det = deterministic(scope, task, task.x_target);
  const LatentGaussian q = encode_context(scope, task);
  std::vector<GaussianHead> heads;
  for (std::size_t s = 0; s < samples; ++s)
    heads.push_back(decode_with(scope, det, sample_latent(scope, q, rng), task.x_target));
  return heads;
}

ad::Var AttentiveNeuralProcess::training_loss(nn::Scope& scope, const Task& task, Rng& rng) {
  return training::elbo_loss(scope, *this, task, rng);
}

// ---------------------------------------------------------------- ConvCNP

ConvCNP::ConvCNP(ModelConfig config, Rng& init) : Model(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  log_psi_lengthscale_ = params_.add("psi.log_lengthscale", {1}, {std::log(c.init_lengthscale)});
  input_projection_ =
      nn::PointwiseConv::create(params_, "input_projection", 1 + c.y_dim, c.projection_channels, init);
  std::size_t channels = c.projection_channels;
  for (std::size_t i = 0; i < c.channel_plan.size(); ++i) {
    const std::string name = "backbone." + std::to_string(i);
    const std::size_t out = c.channel_plan[i];
    ResidualBlock block;
    block.conv = nn::Conv1d::create(params_, name + ".conv", channels, out, c.kernel_width, init);
    block.merge = nn::PointwiseConv::create(params_, name + ".merge", channels + out, out, init);
    backbone_.push_back(block);
    channels = out;
  }
  output_projection_ = nn::Linear::create(params_, "output_projection", channels, 2 * c.y_dim, init);
}

double ConvCNP::psi_lengthscale() const {
  return std::exp(params_[log_psi_lengthscale_].value[0]);
}

Grid ConvCNP::grid_for(const Task& task) const {
  return build_grid(task.x_context, task.x_target, config_.points_per_unit, config_.grid_margin);
}

ad::Var ConvCNP::density(nn::Scope& scope, const Task& task, const Grid& grid) {
  NPF_REQUIRE(task.num_context() > 0, "convcnp_encode: empty context");
  ad::Var w = kernels::eq_gram(scope.tape(), scope(log_psi_lengthscale_), grid.points, task.x_context);
  return ad::reshape(ad::sum(w, 1), {1, grid.points.size()});
}

ad::Var ConvCNP::encode(nn::Scope& scope, const Task& task, const Grid& grid) {
  NPF_REQUIRE(task.num_context() > 0, "convcnp_encode: empty context");
  ad::Tape& tape = scope.tape();
  const std::size_t g = grid.points.size(), n = task.num_context(), dy = config_.y_dim;
  ad::Var w = kernels::eq_gram(tape, scope(log_psi_lengthscale_), grid.points, task.x_context);
  ad::Var dens = ad::sum(w, 1);
  ad::Var y = tape.constant({n, dy}, task.y_context);
  ad::Var signal = ad::matmul(w, y);
  ad::Var denom = ad::broadcast(ad::reshape(ad::clamp_min(dens, 1e-8), {g, 1}), {g, dy});
  ad::Var nw = ad::transpose(signal / denom);
  return ad::concat({ad::reshape(dens, {1, g}), nw}, 0);
}

GaussianHead ConvCNP::decode(nn::Scope& scope, ad::Var representation, const Grid& grid,
                             std::span<const double> x_target) {
  NPF_REQUIRE(representation.shape().size() == 2 && representation.shape()[0] == 1 + config_.y_dim,
              "cnn_decode: representation must have 1 + y_dim channels");
  ad::Var h = input_projection_(scope, representation);
  for (const ResidualBlock& block : backbone_) {
    ad::Var out = ad::relu(block.conv(scope, h));
    h = block.merge(scope, ad::concat({h, out}, 0));
  }
  // Normalised EQ weights of every target over the grid, as a softmax of
  // -d^2 / (2 l^2) so distant targets cannot underflow to 0/0.
  ad::Tape& tape = scope.tape();
  const std::size_t m = x_target.size(), g = grid.points.size();
  std::vector<double> d2(m * g);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const double d = x_target[i] - grid.points[j];
      d2[i * g + j] = d * d;
    }
  ad::Var coef = ad::scale(
      ad::exp(ad::scale(ad::reshape(scope(log_psi_lengthscale_), {}), -2.0)), -0.5);
  ad::Var weights = ad::softmax_lastdim(
      ad::mul(tape.constant({m, g}, std::move(d2)), ad::broadcast(coef, {m, g})));
  ad::Var features = ad::matmul(weights, ad::transpose(h));
  return split_head(output_projection_(scope, features), config_.y_dim);
}

std::vector<GaussianHead> ConvCNP::predict(nn::Scope& scope, const Task& task, std::size_t samples,
                                           Rng&) {
  NPF_REQUIRE(samples >= 1, "predict: at least one sample required");
  const Grid grid = grid_for(task);
  return {decode(scope, encode(scope, task, grid), grid, task.x_target)};
}

ad::Var ConvCNP::training_loss(nn::Scope& scope, const Task& task, Rng& rng) {
  return training::nll_loss(predict(scope, task, 1, rng).front(), task.y_target);
}

// ---------------------------------------------------------------- GP-ConvCNP

GPConvCNP::GPConvCNP(ModelConfig config, Rng& init) : ConvCNP(std::move(config), init) {
  log_gp_lengthscale_ = params_.add("gp.log_lengthscale", {1}, {std::log(config_.init_lengthscale)});
  log_gp_noise_ = params_.add("gp.log_noise", {1}, {std::log(config_.init_noise)});
}

double GPConvCNP::gp_lengthscale() const { return std::exp(params_[log_gp_lengthscale_].value[0]); }
double GPConvCNP::gp_noise() const { return std::exp(params_[log_gp_noise_].value[0]); }

gp::DifferentiablePosterior GPConvCNP::posterior(nn::Scope& scope, const Task& task,
                                                 const Grid& grid) {
  NPF_REQUIRE(task.num_context() > 0, "gpconvcnp_encode: empty context");
  return gp::eq_posterior(scope.tape(), scope(log_gp_lengthscale_), scope(log_gp_noise_),
                          task.x_context, task.y_context, config_.y_dim, grid.points);
}

ad::Var GPConvCNP::encode(nn::Scope& scope, const Task& task, const Grid& grid, Rng& rng) {
  const auto post = posterior(scope, task, grid);
  return ad::concat({density(scope, task, grid), ad::transpose(gp::draw(scope.tape(), post, rng))}, 0);
}

std::vector<GaussianHead> GPConvCNP::predict(nn::Scope& scope, const Task& task,
                                             std::size_t samples, Rng& rng) {
  NPF_REQUIRE(samples >= 1, "predict: at least one sample required");
  const Grid grid = grid_for(task);
  const auto post = posterior(scope, task, grid);
  ad::Var dens = density(scope, task, grid);
  std::vector<GaussianHead> heads;
  for (std::size_t s = 0; s < samples; ++s) {
    ad::Var rep = ad::concat({dens, ad::transpose(gp::draw(scope.tape(), post, rng))}, 0);
    heads.push_back(decode(scope, rep, grid, task.x_target));
  }
  return heads;
}

ad::Var GPConvCNP::training_loss(nn::Scope& scope, const Task& task, Rng& rng) {
  return training::nll_loss(predict(scope, task, 1, rng).front(), task.y_target);
}

// ---------------------------------------------------------------- helpers

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed) {
  Rng init(seed);
  switch (config.kind) {
    case ModelKind::np: return std::make_unique<NeuralProcess>(config, init);
    case ModelKind::anp: return std::make_unique<AttentiveNeuralProcess>(config, init);
    case ModelKind::convcnp: return std::make_unique<ConvCNP>(config, init);
    case ModelKind::gpconvcnp: return std::make_unique<GPConvCNP>(config, init);
  }
  throw ContractViolation("unknown model kind");
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  auto mlp = [&](std::size_t in, std::size_t out) {
    std::size_t n = linear(in, c.hidden);
    n += (c.hidden_layers - 1) * linear(c.hidden, c.hidden);
    return n + linear(c.hidden, out);
  };
  const std::size_t encoder = mlp(1 + c.y_dim, 2 * c.latent);
  switch (c.kind) {
    case ModelKind::np:
      return encoder + mlp(c.latent + 1, 2 * c.y_dim);
    case ModelKind::anp:
      return encoder + mlp(1 + c.y_dim, c.hidden) + 2 * linear(1, c.hidden) +
             2 * linear(c.hidden, c.hidden) + mlp(c.hidden + c.latent + 1, 2 * c.y_dim);
    case ModelKind::convcnp:
    case ModelKind::gpconvcnp: {
      std::size_t n = 1 + linear(1 + c.y_dim, c.projection_channels);
      std::size_t ch = c.projection_channels;
      for (std::size_t out : c.channel_plan) {
        n += out * ch * c.kernel_width + out + linear(ch + out, out);
        ch = out;
      }
      n += linear(ch, 2 * c.y_dim);
      return c.kind == ModelKind::gpconvcnp ? n + 2 : n;
    }
  }
  return 0;
}

PredictiveDistribution forward(Model& model, const Task& task, std::size_t samples, Rng& rng) {
  task.validate();
  ad::Tape tape(false);
  nn::Scope scope(tape, model.parameters());
  const auto heads = model.predict(scope, task, samples, rng);
  PredictiveDistribution pred;
  pred.num_targets = task.num_target();
  pred.y_dim = model.config().y_dim;
  for (const auto& h : heads) {
    auto m = h.mean.values();
    auto s = h.std.values();
    pred.components.push_back({{m.begin(), m.end()}, {s.begin(), s.end()}});
  }
  return pred;
}

}  // namespace npf::models
