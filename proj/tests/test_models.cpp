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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "properties.hpp"
#include "npf/models.hpp"

using namespace npf;
using namespace npf::models;
using npf::test::Rng;
using npf::test::make_task;
using npf::test::uniform;
using npf::test::max_diff;
using npf::test::permuted;
using npf::test::random_task;
constexpr auto& kAllKinds = npf::test::kAllModelKinds;

namespace {

std::size_t linear(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t mlp(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
  return linear(in, hidden) + (layers - 1) * linear(hidden, hidden) + linear(hidden, out);
}

// Counted layer by layer from the architecture description.
std::size_t hand_count(ModelKind kind, std::size_t dy) {
  const std::size_t h = 128, z = 128;
  if (kind == ModelKind::np) return mlp(1 + dy, h, 6, 2 * z) + mlp(z + 1, h, 6, 2 * dy);
  if (kind == ModelKind::anp) {
    const std::size_t attention = linear(1, h) + linear(1, h) + linear(h, h) + linear(h, h);
    return mlp(1 + dy, h, 6, 2 * z) + mlp(1 + dy, h, 6, h) + attention + mlp(h + z + 1, h, 6, 2 * dy);
  }
  std::size_t total = 1 + ((1 + dy) * 8 + 8);
  std::size_t prev = 8;
  for (std::size_t c : {16, 16, 32, 32, 64, 64, 32, 32, 16, 16, 8, 8}) {
    total += c * prev * 5 + c;          // width-5 convolution
    total += (prev + c) * c + c;        // 1x1 merge of the concatenation
    prev = c;
  }
  total += linear(8, 2 * dy);
  return kind == ModelKind::gpconvcnp ? total + 2 : total;
}

ad::Parameter& param(Model& m, const std::string& name) {
  for (auto& p : m.parameters().all())
    if (p.name == name) return p;
  FAIL("no parameter " << name);
  throw;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("parameter counts match a layer-by-layer count") {
  for (std::size_t dy : {1, 2})
    for (auto kind : kAllKinds) {
      auto model = make_model(ModelConfig::defaults(kind, dy), 0);
      INFO(to_string(kind) << " dy=" << dy);
      CHECK(model->parameters().count() == hand_count(kind, dy));
      CHECK(expected_parameter_count(model->config()) == hand_count(kind, dy));
    }
  CHECK(hand_count(ModelKind::np, 1) == 215426);
  CHECK(hand_count(ModelKind::anp, 1) == 364802);
  CHECK(hand_count(ModelKind::convcnp, 1) == 86731);
  CHECK(hand_count(ModelKind::gpconvcnp, 1) == 86733);
}

TEST_CASE("initialisation is deterministic per seed") {
  auto a = make_model(ModelConfig::defaults(ModelKind::convcnp), 3);
  auto b = make_model(ModelConfig::defaults(ModelKind::convcnp), 3);
  auto c = make_model(ModelConfig::defaults(ModelKind::convcnp), 4);
  for (std::size_t i = 0; i < a->parameters().size(); ++i)
    CHECK(a->parameters()[i].value == b->parameters()[i].value);
  CHECK(a->parameters()[1].value != c->parameters()[1].value);
}

TEST_CASE("learnable lengthscales start at 0.1 and the GP noise at 0.01") {
  Rng init(0);
  GPConvCNP m(ModelConfig::defaults(ModelKind::gpconvcnp), init);
  CHECK(m.psi_lengthscale() == doctest::Approx(0.1));
  CHECK(m.gp_lengthscale() == doctest::Approx(0.1));
  CHECK(m.gp_noise() == doctest::Approx(0.01));
}

TEST_CASE("model names round trip") {
  for (auto kind : kAllKinds) CHECK(model_kind_from_string(to_string(kind)) == kind);
  CHECK_FALSE(model_kind_from_string("cnp").has_value());
}

TEST_CASE("grid over [-3, 3] has 125 points") {
  std::vector<double> xc{-3.0, 1.0}, xt{3.0};
  auto g = build_grid(xc, xt);
  CHECK(g.lo == doctest::Approx(-3.1));
  CHECK(g.hi == doctest::Approx(3.1));
  CHECK(g.points.size() == 125);
  for (std::size_t i = 1; i < g.points.size(); ++i)
    CHECK(g.points[i] - g.points[i - 1] == doctest::Approx(0.05));
}

TEST_CASE("grid around a single input has 5 points") {
  std::vector<double> xc{0.0}, none;
  auto g = build_grid(xc, none);
  CHECK(g.lo == doctest::Approx(-0.1));
  CHECK(g.hi == doctest::Approx(0.1));
  CHECK(g.points.size() == 5);
}

TEST_CASE("np encoding: duplicates, permutations and single pairs") {
  Rng init(1), rng(2);
  NeuralProcess np(ModelConfig::defaults(ModelKind::np), init);
  Task t = random_task(rng, 6, 3);
  Task twice = t;
  twice.x_context.insert(twice.x_context.end(), t.x_context.begin(), t.x_context.end());
  twice.y_context.insert(twice.y_context.end(), t.y_context.begin(), t.y_context.end());
  Task shuffled = permuted(t, rng);

  ad::Tape tape(false);
  nn::Scope scope(tape, np.parameters());
  auto a = np.encode_context(scope, t), b = np.encode_context(scope, twice),
       c = np.encode_context(scope, shuffled);
  REQUIRE(a.mean.size() == 128);
  for (std::size_t i = 0; i < 128; ++i) {
    CHECK(std::abs(a.mean.at(i) - b.mean.at(i)) <= 1e-12);
    CHECK(std::abs(a.std.at(i) - b.std.at(i)) <= 1e-12);
    CHECK(std::abs(a.mean.at(i) - c.mean.at(i)) <= 1e-12);
    CHECK(a.std.at(i) >= kStdFloor);
  }
  std::vector<double> x1{0.4}, y1{-0.3};
  auto one = np.encode(scope, x1, y1);
  CHECK(one.mean.size() == 128);
  std::vector<double> none;
  CHECK_THROWS_AS(np.encode(scope, none, none), ContractViolation);
}

TEST_CASE("np decoder: shape, floor and identical targets") {
  Rng init(1), rng(3);
  NeuralProcess np(ModelConfig::defaults(ModelKind::np), init);
  ad::Tape tape(false);
  nn::Scope scope(tape, np.parameters());
  auto z = tape.constant({128}, uniform(rng, 128, -1, 1));
  std::vector<double> xt{0.5, -1.0, 0.5};
  auto h = np.decode(scope, z, xt);
  REQUIRE(h.mean.shape() == ad::Shape{3, 1});
  CHECK(h.mean.at(0) == h.mean.at(2));
  CHECK(h.std.at(0) == h.std.at(2));
  for (double s : h.std.values()) CHECK(s >= kStdFloor);
}

TEST_CASE("anp attention over a single context pair is constant across queries") {
  Rng init(1);
  AttentiveNeuralProcess anp(ModelConfig::defaults(ModelKind::anp), init);
  Task t = make_task({0.3}, {-2.0, 0.0, 1.5});
  ad::Tape tape(false);
  nn::Scope scope(tape, anp.parameters());
  auto a = anp.deterministic(scope, t, t.x_target);
  REQUIRE(a.shape() == ad::Shape{3, 128});
  for (std::size_t j = 0; j < 128; ++j) {
    CHECK(a.at(j) == doctest::Approx(a.at(128 + j)).epsilon(1e-12));
    CHECK(a.at(j) == doctest::Approx(a.at(256 + j)).epsilon(1e-12));
  }
  Task empty = t;
  empty.x_context.clear();
  empty.y_context.clear();
  CHECK_THROWS_AS(anp.deterministic(scope, empty, t.x_target), ContractViolation);
}

TEST_CASE("anp output has one row per target and two outputs for two-dimensional data") {
  Rng init(1), rng(4);
  AttentiveNeuralProcess anp(ModelConfig::defaults(ModelKind::anp, 2), init);
  Task t = random_task(rng, 5, 7, 2);
  auto pred = forward(anp, t, 3, rng);
  CHECK(pred.size() == 3);
  CHECK(pred.components[0].mean.size() == 14);
}

TEST_CASE("convcnp encoding of one and two identical points") {
  Rng init(1);
  ConvCNP m(ModelConfig::defaults(ModelKind::convcnp), init);
  ad::Tape tape(false);
  nn::Scope scope(tape, m.parameters());
  for (std::size_t copies : {1, 2}) {
    Task t = make_task(std::vector<double>(copies, 0.0), {0.0});
    t.y_context.assign(copies, 5.0);
    Grid g = m.grid_for(t);
    REQUIRE(g.points.size() == 5);
    REQUIRE(g.points[2] == 0.0);
    auto rep = m.encode(scope, t, g);
    REQUIRE(rep.shape() == ad::Shape{2, 5});
    CHECK(rep.at(2) == doctest::Approx(static_cast<double>(copies)));
    CHECK(rep.at(5 + 2) == doctest::Approx(5.0));
  }
}

TEST_CASE("convcnp encoding is permutation invariant") {
  Rng init(1), rng(5);
  ConvCNP m(ModelConfig::defaults(ModelKind::convcnp), init);
  Task t = random_task(rng, 30, 10);
  Task p = permuted(t, rng);
  ad::Tape tape(false);
  nn::Scope scope(tape, m.parameters());
  Grid g = m.grid_for(t);
  auto a = m.encode(scope, t, g), b = m.encode(scope, p, g);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.at(i) - b.at(i)) <= 1e-12);
}

TEST_CASE("gpconvcnp channel interpolates a context point as the noise vanishes") {
  Rng init(1), rng(6);
  GPConvCNP m(ModelConfig::defaults(ModelKind::gpconvcnp), init);
  param(m, "gp.log_noise").value[0] = std::log(1e-9);
  Task t = make_task({0.0}, {0.0});
  t.y_context = {0.8};
  ad::Tape tape(false);
  nn::Scope scope(tape, m.parameters());
  Grid g = m.grid_for(t);
  auto rep = m.encode(scope, t, g, rng);
  CHECK(rep.at(g.points.size() + 2) == doctest::Approx(0.8).epsilon(1e-3));
}

TEST_CASE("gpconvcnp encoding is reproducible and permutation invariant") {
  Rng init(1), rng(7);
  GPConvCNP m(ModelConfig::defaults(ModelKind::gpconvcnp), init);
  Task t = random_task(rng, 12, 5);
  Task p = permuted(t, rng);
  ad::Tape tape(false);
  nn::Scope scope(tape, m.parameters());
  Grid g = m.grid_for(t);
  Rng r1(9), r2(9), r3(9);
  auto a = m.encode(scope, t, g, r1), b = m.encode(scope, t, g, r2), c = m.encode(scope, p, g, r3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.at(i) == b.at(i));
    CHECK(std::abs(a.at(i) - c.at(i)) <= 1e-10);
  }
}

TEST_CASE("all four models are permutation invariant with fixed seeds") {
  Rng rng(8);
  for (auto kind : kAllKinds) {
    auto model = make_model(ModelConfig::defaults(kind), 11);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      Task t = random_task(rng, 15, 10);
      Task p = permuted(t, rng);
      Rng r1(100 + k), r2(100 + k);
      worst = std::max(worst, max_diff(forward(*model, t, 4, r1), forward(*model, p, 4, r2), false));
    }
    INFO(to_string(kind) << " worst " << worst);
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("convolutional models are equivariant to grid-aligned shifts") {
  Rng rng(9);
  for (auto kind : {ModelKind::convcnp, ModelKind::gpconvcnp}) {
    auto model = make_model(ModelConfig::defaults(kind), 12);
    double worst = 0.0;
    for (int k : {-20, -3, 1, 7, 40}) {
      Task t = random_task(rng, 15, 10);
      Task s = t;
      for (auto& x : s.x_context) x += 0.05 * k;
      for (auto& x : s.x_target) x += 0.05 * k;
      Rng r1(200), r2(200);
      worst = std::max(worst, max_diff(forward(*model, t, 3, r1), forward(*model, s, 3, r2), true));
    }
    INFO(to_string(kind) << " worst " << worst);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("component counts") {
  Rng rng(10);
  Task t = random_task(rng, 5, 4);
  auto conv = make_model(ModelConfig::defaults(ModelKind::convcnp), 0);
  auto gpc = make_model(ModelConfig::defaults(ModelKind::gpconvcnp), 0);
  auto np = make_model(ModelConfig::defaults(ModelKind::np), 0);
  CHECK(forward(*conv, t, 10, rng).size() == 1);
  CHECK(forward(*gpc, t, 1, rng).size() == 1);
  CHECK(forward(*gpc, t, 6, rng).size() == 6);
  CHECK(forward(*np, t, 7, rng).size() == 7);
}

TEST_CASE("outputs are finite with standard deviations above the floor") {
  Rng rng(11);
  for (auto kind : kAllKinds) {
    auto model = make_model(ModelConfig::defaults(kind), 13);
    for (int k = 0; k < 3; ++k) {
      Task t = random_task(rng, 20, 15);
      auto pred = forward(*model, t, 2, rng);
      for (const auto& c : pred.components) {
        REQUIRE(c.mean.size() == 15);
        for (double v : c.mean) CHECK(std::isfinite(v));
        for (double s : c.std) CHECK(s >= kStdFloor);
      }
    }
  }
}

TEST_CASE("identical targets get identical predictions") {
  Rng rng(12);
  for (auto kind : {ModelKind::convcnp, ModelKind::np}) {
    auto model = make_model(ModelConfig::defaults(kind), 14);
    Task t = make_task(uniform(rng, 8, -2, 2), {0.25, 1.0, 0.25});
    auto pred = forward(*model, t, 1, rng);
    CHECK(pred.components[0].mean[0] == pred.components[0].mean[2]);
    CHECK(pred.components[0].std[0] == pred.components[0].std[2]);
  }
}

TEST_CASE("training losses are finite scalars with gradients for every parameter") {
  Rng rng(13);
  for (auto kind : kAllKinds) {
    auto model = make_model(ModelConfig::defaults(kind), 15);
    Task t = random_task(rng, 10, 20);
    ad::Tape tape;
    nn::Scope scope(tape, model->parameters());
    auto loss = model->training_loss(scope, t, rng);
    REQUIRE(loss.shape().empty());
    CHECK(std::isfinite(loss.item()));
    model->parameters().zero_grad();
    tape.backward(loss);
    std::size_t touched = 0;
    for (const auto& p : model->parameters().all())
      if (std::any_of(p.grad.begin(), p.grad.end(), [](double g) { return g != 0.0; })) ++touched;
    INFO(to_string(kind));
    CHECK(touched == model->parameters().size());
  }
}

TEST_CASE("mixture mean averages component means") {
  PredictiveDistribution p;
  p.num_targets = 2;
  p.components = {{{1.0, 2.0}, {1.0, 1.0}}, {{3.0, -2.0}, {1.0, 1.0}}};
  auto m = p.mixture_mean();
  CHECK(m[0] == 2.0);
  CHECK(m[1] == 0.0);
}

TEST_CASE("invalid configurations are rejected") {
  auto c = ModelConfig::defaults(ModelKind::convcnp);
  c.kernel_width = 4;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = ModelConfig::defaults(ModelKind::np);
  c.y_dim = 0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
}

}  // TEST_SUITE
