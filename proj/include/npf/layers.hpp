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

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "npf/autodiff.hpp"

namespace npf::nn {

using Rng = std::mt19937_64;

/// Owns a model's parameters. Indices handed out by add() stay valid for the
/// lifetime of the set.
class ParameterSet {
 public:
  std::size_t add(std::string name, ad::Shape shape, std::vector<double> value);
  /// U(-bound, bound) initialisation.
  std::size_t add_uniform(std::string name, ad::Shape shape, double bound, Rng& rng);

  ad::Parameter& operator[](std::size_t i) { return params_[i]; }
  const ad::Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::vector<ad::Parameter>& all() { return params_; }
  const std::vector<ad::Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  /// Total number of scalars.
  std::size_t count() const;
  void zero_grad();
  const ad::Parameter* find(const std::string& name) const;

 private:
  std::vector<ad::Parameter> params_;
};

/// Binds parameters onto one tape, each at most once.
class Scope {
 public:
  Scope(ad::Tape& tape, ParameterSet& params) : tape_(tape), params_(params) {}
  ad::Tape& tape() { return tape_; }
  ad::Var operator()(std::size_t index);

 private:
  ad::Tape& tape_;
  ParameterSet& params_;
  std::vector<std::optional<ad::Var>> bound_;
};

/// y = x W + b for x of shape (rows x in).
struct Linear {
  std::size_t weight = 0, bias = 0;
  std::size_t in = 0, out = 0;

  static Linear create(ParameterSet& params, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng);
  ad::Var operator()(Scope& scope, ad::Var x) const;
  std::size_t parameter_count() const { return in * out + out; }
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  /// `hidden_layers` hidden layers of width `hidden`.
  static Mlp create(ParameterSet& params, const std::string& name, std::size_t in,
                    std::size_t hidden, std::size_t hidden_layers, std::size_t out, Rng& rng);
  ad::Var operator()(Scope& scope, ad::Var x) const;
  std::size_t parameter_count() const;
};

/// Same-padded 1-D convolution with bias over (channels x length) inputs.
struct Conv1d {
  std::size_t weight = 0, bias = 0;
  std::size_t in = 0, out = 0, width = 0;

  static Conv1d create(ParameterSet& params, const std::string& name, std::size_t in,
                       std::size_t out, std::size_t width, Rng& rng);
  ad::Var operator()(Scope& scope, ad::Var x) const;
};

/// Per-position channel mixing: (out x in) . x + b for x of shape (in x length).
struct PointwiseConv {
  std::size_t weight = 0, bias = 0;
  std::size_t in = 0, out = 0;

  static PointwiseConv create(ParameterSet& params, const std::string& name, std::size_t in,
                              std::size_t out, Rng& rng);
  ad::Var operator()(Scope& scope, ad::Var x) const;
};

/// Multi-head scaled dot-product attention with learned query/key/value and
/// output maps. Queries (m x q_in), keys (n x k_in), values (n x v_in).
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1, embed = 0;

  static MultiHeadAttention create(ParameterSet& params, const std::string& name,
                                   std::size_t q_in, std::size_t k_in, std::size_t v_in,
                                   std::size_t embed, std::size_t heads, Rng& rng);
  ad::Var operator()(Scope& scope, ad::Var queries, ad::Var keys, ad::Var values) const;
};

}  // namespace npf::nn
