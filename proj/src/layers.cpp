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

#include "npf/layers.hpp"

#include <cmath>

namespace npf::nn {

std::size_t ParameterSet::add(std::string name, ad::Shape shape, std::vector<double> value) {
  for (const auto& p : params_)
    NPF_REQUIRE(p.name != name, "duplicate parameter name '" + name + "'");
  params_.emplace_back(std::move(name), std::move(shape), std::move(value));
  return params_.size() - 1;
}

std::size_t ParameterSet::add_uniform(std::string name, ad::Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = u(rng);
  return add(std::move(name), std::move(shape), std::move(v));
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

const ad::Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

ad::Var Scope::operator()(std::size_t index) {
  if (bound_.size() < params_.size()) bound_.resize(params_.size());
  auto& slot = bound_.at(index);
  if (!slot) slot = tape_.parameter(params_[index]);
  return *slot;
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = params.add_uniform(name + ".weight", {in, out}, bound, rng);
  l.bias = params.add_uniform(name + ".bias", {out}, bound, rng);
  return l;
}

ad::Var Linear::operator()(Scope& scope, ad::Var x) const {
  NPF_REQUIRE(x.shape().size() == 2 && x.shape()[1] == in,
              "linear: expected (rows x " + std::to_string(in) + "), got " + ad::to_string(x.shape()));
  ad::Var y = ad::matmul(x, scope(weight));
  return y + ad::broadcast(scope(bias), y.shape());
}

Mlp Mlp::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t hidden,
                std::size_t hidden_layers, std::size_t out, Rng& rng) {
  Mlp m;
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    m.layers.push_back(Linear::create(params, name + "." + std::to_string(i), width, hidden, rng));
    width = hidden;
  }
  m.layers.push_back(
      Linear::create(params, name + "." + std::to_string(hidden_layers), width, out, rng));
  return m;
}

ad::Var Mlp::operator()(Scope& scope, ad::Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](scope, x);
    if (i + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

Conv1d Conv1d::create(ParameterSet& params, const std::string& name, std::size_t in,
                      std::size_t out, std::size_t width, Rng& rng) {
  // Glorot-uniform weights and zero bias keep the signal alive through the
  // deep residual stack.
  const double bound = std::sqrt(6.0 / static_cast<double>((in + out) * width));
  Conv1d c;
  c.in = in;
  c.out = out;
  c.width = width;
  c.weight = params.add_uniform(name + ".weight", {out, in, width}, bound, rng);
  c.bias = params.add(name + ".bias", {out, 1}, std::vector<double>(out, 0.0));
  return c;
}

ad::Var Conv1d::operator()(Scope& scope, ad::Var x) const {
  ad::Var y = ad::conv1d_same(x, scope(weight));
  return y + ad::broadcast(scope(bias), y.shape());
}

PointwiseConv PointwiseConv::create(ParameterSet& params, const std::string& name, std::size_t in,
                                    std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  PointwiseConv c;
  c.in = in;
  c.out = out;
  c.weight = params.add_uniform(name + ".weight", {out, in}, bound, rng);
  c.bias = params.add(name + ".bias", {out, 1}, std::vector<double>(out, 0.0));
  return c;
}

ad::Var PointwiseConv::operator()(Scope& scope, ad::Var x) const {
  ad::Var y = ad::matmul(scope(weight), x);
  return y + ad::broadcast(scope(bias), y.shape());
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& name,
                                              std::size_t q_in, std::size_t k_in,
                                              std::size_t v_in, std::size_t embed,
                                              std::size_t heads, Rng& rng) {
  NPF_REQUIRE(heads > 0 && embed % heads == 0, "attention: embed must be divisible by heads");
  MultiHeadAttention a;
  a.heads = heads;
  a.embed = embed;
  a.query = Linear::create(params, name + ".query", q_in, embed, rng);
  a.key = Linear::create(params, name + ".key", k_in, embed, rng);
  a.value = Linear::create(params, name + ".value", v_in, embed, rng);
  a.output = Linear::create(params, name + ".output", embed, embed, rng);
  return a;
}

ad::Var MultiHeadAttention::operator()(Scope& scope, ad::Var queries, ad::Var keys,
                                       ad::Var values) const {
  ad::Var q = query(scope, queries);
  ad::Var k = key(scope, keys);
  ad::Var v = value(scope, values);
  const std::size_t head_dim = embed / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice(q, 1, h * head_dim, head_dim);
    ad::Var kh = ad::slice(k, 1, h * head_dim, head_dim);
    ad::Var vh = ad::slice(v, 1, h * head_dim, head_dim);
    ad::Var logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    outs.push_back(ad::matmul(ad::softmax_lastdim(logits), vh));
  }
  return output(scope, ad::concat(outs, 1));
}

}  // namespace npf::nn
