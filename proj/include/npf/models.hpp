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

// NP, ANP, ConvCNP and GP-ConvCNP as maps from a task's context to a
// predictive distribution over its target inputs.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "npf/autodiff.hpp"
#include "npf/gp.hpp"
#include "npf/layers.hpp"
#include "npf/task.hpp"

namespace npf::models {

using Rng = std::mt19937_64;

enum class ModelKind { np, anp, convcnp, gpconvcnp };
std::string to_string(ModelKind kind);
std::optional<ModelKind> model_kind_from_string(const std::string& name);

inline constexpr double kStdFloor = 1e-4;

struct ModelConfig {
  ModelKind kind = ModelKind::convcnp;
  std::size_t y_dim = 1;

  // NP / ANP
  std::size_t hidden = 128;
  std::size_t hidden_layers = 6;
  std::size_t latent = 128;
  std::size_t heads = 8;

  // ConvCNP / GP-ConvCNP
  std::size_t projection_channels = 8;
  std::vector<std::size_t> channel_plan{16, 16, 32, 32, 64, 64, 32, 32, 16, 16, 8, 8};
  std::size_t kernel_width = 5;
  double points_per_unit = 20.0;
  double grid_margin = 0.1;
  double init_lengthscale = 0.1;
  double init_noise = 0.01;

  static ModelConfig defaults(ModelKind kind, std::size_t y_dim = 1);
  void validate() const;
};

/// Per-target diagonal Gaussian on a tape; mean and std are (M x d_y).
struct GaussianHead {
  ad::Var mean;
  ad::Var std;
};

/// Value-level mixture of S diagonal Gaussians with uniform weights. Vectors
/// are row-major (num_targets x y_dim).
struct PredictiveDistribution {
  struct Component {
    std::vector<double> mean;
    std::vector<double> std;
  };
  std::vector<Component> components;
  std::size_t num_targets = 0;
  std::size_t y_dim = 1;

  std::size_t size() const { return components.size(); }
  /// Uniform average of the component means.
  std::vector<double> mixture_mean() const;
};

struct LatentGaussian {
  ad::Var mean;
  ad::Var std;
};

struct Grid {
  double lo = 0.0;
  double hi = 0.0;
  double spacing = 0.05;
  std::vector<double> points;
};

/// Uniform grid at `points_per_unit` over [min - margin, max + margin] of the
/// combined inputs, with floor((hi - lo) * points_per_unit) + 1 points.
Grid build_grid(std::span<const double> x_context, std::span<const double> x_target,
                double points_per_unit = 20.0, double margin = 0.1);

class Model {
 public:
  Model(ModelConfig config) : config_(std::move(config)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ModelKind kind() const { return config_.kind; }
  const ModelConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  /// `samples` Gaussian heads over task.x_target. Deterministic models return one.
  virtual std::vector<GaussianHead> predict(nn::Scope& scope, const Task& task,
                                            std::size_t samples, Rng& rng) = 0;
  /// Scalar training objective for one task (minimised).
  virtual ad::Var training_loss(nn::Scope& scope, const Task& task, Rng& rng) = 0;

 protected:
  ModelConfig config_;
  nn::ParameterSet params_;
};

/// Latent-variable Neural Process.
class NeuralProcess : public Model {
 public:
  NeuralProcess(ModelConfig config, Rng& init);

  /// Per-pair encodings averaged, then split into mean and std
  /// (std = 1e-4 + softplus of the second half).
  LatentGaussian encode(nn::Scope& scope, std::span<const double> x, std::span<const double> y);
  LatentGaussian encode_context(nn::Scope& scope, const Task& task);
  ad::Var sample_latent(nn::Scope& scope, const LatentGaussian& q, Rng& rng);
  /// Decoder on concat(z, x_t[i]) for every target.
  GaussianHead decode(nn::Scope& scope, ad::Var z, std::span<const double> x_target);

  std::vector<GaussianHead> predict(nn::Scope& scope, const Task& task, std::size_t samples,
                                    Rng& rng) override;
  ad::Var training_loss(nn::Scope& scope, const Task& task, Rng& rng) override;

 protected:
  NeuralProcess(ModelConfig config, Rng& init, std::size_t decoder_extra_inputs);
  GaussianHead decode_with(nn::Scope& scope, std::optional<ad::Var> deterministic, ad::Var z,
                           std::span<const double> x_target);

  nn::Mlp latent_encoder_;
  nn::Mlp decoder_;
};

/// NP with an additional attention-based deterministic path.
class AttentiveNeuralProcess : public NeuralProcess {
 public:
  AttentiveNeuralProcess(ModelConfig config, Rng& init);

  /// Per-target deterministic representation a(x_t), shape (M x hidden).
  ad::Var deterministic(nn::Scope& scope, const Task& task, std::span<const double> x_target);
  /// Heads for a fixed latent sample z.
  GaussianHead forward(nn::Scope& scope, const Task& task, std::span<const double> x_target,
                       ad::Var z);

  std::vector<GaussianHead> predict(nn::Scope& scope, const Task& task, std::size_t samples,
                                    Rng& rng) override;
  ad::Var training_loss(nn::Scope& scope, const Task& task, Rng& rng) override;

 private:
  nn::Mlp deterministic_encoder_;
  nn::MultiHeadAttention attention_;
};

/// Convolutional Conditional Neural Process.
class ConvCNP : public Model {
 public:
  ConvCNP(ModelConfig config, Rng& init);

  Grid grid_for(const Task& task) const;
  /// Density channel sum_c k(g, x_c) and Nadaraya-Watson channels, shape
  /// ((1 + d_y) x |grid|).
  ad::Var encode(nn::Scope& scope, const Task& task, const Grid& grid);
  /// Density channel alone, shape (1 x |grid|).
  ad::Var density(nn::Scope& scope, const Task& task, const Grid& grid);
  /// Projection, residual CNN, EQ smoothing onto x_target, output projection.
  GaussianHead decode(nn::Scope& scope, ad::Var representation, const Grid& grid,
                      std::span<const double> x_target);

  std::vector<GaussianHead> predict(nn::Scope& scope, const Task& task, std::size_t samples,
                                    Rng& rng) override;
  ad::Var training_loss(nn::Scope& scope, const Task& task, Rng& rng) override;

  double psi_lengthscale() const;

 protected:
  struct ResidualBlock {
    nn::Conv1d conv;
    nn::PointwiseConv merge;
  };

  std::size_t log_psi_lengthscale_ = 0;
  nn::PointwiseConv input_projection_;
  std::vector<ResidualBlock> backbone_;
  nn::Linear output_projection_;
};

/// ConvCNP whose Nadaraya-Watson channel is replaced by a GP posterior sample.
class GPConvCNP : public ConvCNP {
 public:
  GPConvCNP(ModelConfig config, Rng& init);

  gp::DifferentiablePosterior posterior(nn::Scope& scope, const Task& task, const Grid& grid);
  /// Density channel stacked on one posterior draw, shape ((1 + d_y) x |grid|).
  ad::Var encode(nn::Scope& scope, const Task& task, const Grid& grid, Rng& rng);

  std::vector<GaussianHead> predict(nn::Scope& scope, const Task& task, std::size_t samples,
                                    Rng& rng) override;
  ad::Var training_loss(nn::Scope& scope, const Task& task, Rng& rng) override;

  double gp_lengthscale() const;
  double gp_noise() const;

 private:
  std::size_t log_gp_lengthscale_ = 0;
  std::size_t log_gp_noise_ = 0;
};

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed);

/// Closed-form scalar count for the architecture described by `config`.
std::size_t expected_parameter_count(const ModelConfig& config);

/// Evaluates the model without recording gradients. ConvCNP ignores `samples`.
PredictiveDistribution forward(Model& model, const Task& task, std::size_t samples, Rng& rng);

/// sigma = 1e-4 + softplus(raw)
ad::Var positive_std(ad::Var raw);

}  // namespace npf::models
