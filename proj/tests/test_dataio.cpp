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

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "properties.hpp"
#include "npf/checkpoint.hpp"
#include "npf/dataio.hpp"
#include "npf/models.hpp"
#include "npf/training.hpp"

using namespace npf;
using namespace npf::dataio;
using npf::test::Rng;
using npf::test::TempDir;
using npf::test::make_task;
using npf::test::write_temperature_csv;

namespace {

const double kNan = std::nan("");

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("interior gaps are filled linearly") {
  auto out = crop_and_fill({1.0, kNan, 3.0});
  CHECK(out == std::vector<double>{1.0, 2.0, 3.0});
  out = crop_and_fill({0.0, kNan, kNan, 3.0});
  CHECK(out[1] == doctest::Approx(1.0));
  CHECK(out[2] == doctest::Approx(2.0));
}

TEST_CASE("leading and trailing gaps are cropped") {
  CHECK(crop_and_fill({kNan, kNan, 4.0, 5.0, kNan}) == std::vector<double>{4.0, 5.0});
  CHECK(crop_and_fill({kNan, kNan}).empty());
}

TEST_CASE("temperature csv: splits, normalisation and skipped cities") {
  TempDir dir("npf-temp");
  std::vector<std::string> warnings;
  auto cities = load_temperature_csv(write_temperature_csv(dir.path(), 1500), &warnings);
  REQUIRE(cities.size() == 3);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("Nowhere") != std::string::npos);
  for (const auto& c : cities) {
    double m = 0.0, v = 0.0;
    for (double x : c.values) m += x;
    m /= static_cast<double>(c.values.size());
    for (double x : c.values) v += (x - m) * (x - m);
    v /= static_cast<double>(c.values.size());
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-6);
    CHECK(c.split == (c.name == "Eilat" ? Split::test : Split::train));
  }
  CHECK(cities[0].values.size() == 1495);
  CHECK(cities[1].values.size() == 1500);
}

TEST_CASE("malformed temperature rows report their line") {
  TempDir dir("npf-bad");
  auto path = dir.path() / "bad.csv";
  spit(path, "datetime,Vancouver\n2013,1.0\n2013,abc\n");
  try {
    load_temperature_csv(path);
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(e.line() == 3);
  }
  spit(path, "datetime,Vancouver\n2013,1.0,2.0\n");
  CHECK_THROWS_AS(load_temperature_csv(path), IngestionError);
  CHECK_THROWS_AS(load_temperature_csv(dir.path() / "missing.csv"), IngestionError);
}

TEST_CASE("window times lie strictly inside the span") {
  CHECK(window_time(0) > 0.0);
  CHECK(window_time(719) < 3.0);
  CHECK(window_time(359) < 1.5);
  CHECK(window_time(360) > 1.5);
}

TEST_CASE("temperature tasks satisfy their ranges over 1000 draws") {
  TempDir dir("npf-temp-tasks");
  auto cities = load_temperature_csv(write_temperature_csv(dir.path(), 1500));
  for (auto mode : {TemperatureMode::interpolation, TemperatureMode::extrapolation}) {
    auto source = temperature_source(cities, Split::train, mode);
    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
      Task t = source(rng);
      t.validate();
      REQUIRE((t.num_context() >= 20 && t.num_context() <= 99));
      REQUIRE((t.num_target() >= t.num_context() && t.num_target() <= 99));
      for (auto xs : {&t.x_context, &t.x_target})
        for (double x : *xs) REQUIRE((x > 0.0 && x < 3.0));
      if (mode == TemperatureMode::extrapolation) {
        REQUIRE(*std::max_element(t.x_context.begin(), t.x_context.end()) <= 1.5);
        REQUIRE(*std::min_element(t.x_target.begin(), t.x_target.end()) > 1.5);
      }
    }
  }
}

TEST_CASE("temperature tasks are deterministic and join the context on request") {
  TempDir dir("npf-temp-det");
  auto cities = load_temperature_csv(write_temperature_csv(dir.path(), 800));
  Rng a(3), b(3);
  CHECK(make_temperature_task(cities[0], TemperatureMode::interpolation, a) ==
        make_temperature_task(cities[0], TemperatureMode::interpolation, b));
  Rng c(4);
  Task joined = make_temperature_task(cities[0], TemperatureMode::interpolation, c, true);
  for (std::size_t i = 0; i < joined.num_context(); ++i) CHECK(joined.x_target[i] == joined.x_context[i]);
  CitySeries short_city = cities[0];
  short_city.values.resize(100);
  CHECK_THROWS_AS(make_temperature_task(short_city, TemperatureMode::interpolation, c), GenerationError);
  std::erase_if(cities, [](const CitySeries& city) { return city.split == Split::test; });
  CHECK_THROWS_AS(temperature_source(cities, Split::test, TemperatureMode::interpolation), GenerationError);
}

TEST_CASE("lynx-hare table loads and normalises to the reference") {
  TempDir dir("npf-lh");
  auto path = dir.path() / "lh.csv";
  spit(path, "year,hare,lynx\n1900,30,4\n1901,47,6\n1902,70,9\n1903,77,35\n1904,36,59\n1905,20,41\n");
  auto data = load_lynx_hare(path);
  REQUIRE(data.size() == 6);
  PopulationReference ref{1.2, 5.0, 1};
  auto s = normalize_lynx_hare(data, ref);
  double mean = 0.0;
  for (double y : s.y) mean += y;
  CHECK(mean / static_cast<double>(s.y.size()) == doctest::Approx(1.2));
  CHECK(s.x.front() == 0.0);
  CHECK(s.x.back() == doctest::Approx(5.0));
  CHECK(s.y[0] == doctest::Approx(4 * s.population_scale));   // lynx first
  CHECK(s.y[1] == doctest::Approx(30 * s.population_scale));  // then hare
  PopulationReference other{2.4, 10.0, 1};
  auto s2 = normalize_lynx_hare(data, other);
  CHECK(s2.population_scale == doctest::Approx(2 * s.population_scale));
  CHECK(s2.time_scale == doctest::Approx(2 * s.time_scale));
}

TEST_CASE("malformed lynx-hare tables are rejected") {
  TempDir dir("npf-lh-bad");
  auto path = dir.path() / "lh.csv";
  spit(path, "year,hare\n1900,30\n");
  CHECK_THROWS_AS(load_lynx_hare(path), IngestionError);
  spit(path, "year,hare,lynx\n1900,30,4\n1899,47,6\n1902,70,9\n1903,77,35\n");
  CHECK_THROWS_AS(load_lynx_hare(path), IngestionError);
  spit(path, "year,hare,lynx\n1900,30,4\n1901,x,6\n");
  CHECK_THROWS_AS(load_lynx_hare(path), IngestionError);
}

TEST_CASE("bundled lynx-hare data") {
  auto data = load_lynx_hare(NPF_SOURCE_DIR "/data/lynx_hare.csv");
  CHECK(data.size() == 21);
  CHECK(data.years.front() == 1900);
}

TEST_CASE("lynx-hare tasks: two outputs, contiguous targets, random split") {
  auto data = load_lynx_hare(NPF_SOURCE_DIR "/data/lynx_hare.csv");
  auto s = normalize_lynx_hare(data, {1.5, 20.0, 1});
  Task c = lynx_hare_contiguous_task(s, 7, 7);
  CHECK(c.y_dim == 2);
  CHECK(c.num_target() == 7);
  CHECK(c.num_context() == 14);
  for (std::size_t i = 0; i < 7; ++i) CHECK(c.x_target[i] == s.x[7 + i]);
  for (double x : c.x_context) CHECK((x < s.x[7] || x > s.x[13]));
  CHECK_THROWS_AS(lynx_hare_contiguous_task(s, 0, s.size()), ContractViolation);

  Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    Task r = lynx_hare_random_task(s, rng);
    REQUIRE(r.y_dim == 2);
    REQUIRE((r.num_context() >= 3 && r.num_context() <= s.size() / 2));
    REQUIRE(r.num_context() + r.num_target() == s.size());
  }
}

TEST_CASE("population reference is positive and deterministic") {
  auto a = estimate_population_reference(5, 1), b = estimate_population_reference(5, 1);
  CHECK(a.mean_population > 0.0);
  CHECK(a.mean_population <= 2.5);
  CHECK(a.mean_duration > 0.0);
  CHECK(a.mean_duration <= datagen::kMaxSimulatedTime * datagen::kTimeScale);
  CHECK(a.mean_population == b.mean_population);
}

}  // TEST_SUITE

TEST_SUITE("checkpoint") {

TEST_CASE("round trip is bit-exact for parameters, optimiser and metadata") {
  TempDir dir("npf-ckpt");
  for (auto kind : {models::ModelKind::np, models::ModelKind::anp, models::ModelKind::convcnp,
                    models::ModelKind::gpconvcnp}) {
    auto model = models::make_model(models::ModelConfig::defaults(kind), 7);
    auto state = training::OptimState::zeros(model->parameters());
    Rng rng(8);
    std::normal_distribution<double> normal;
    for (auto& v : state.m)
      for (auto& x : v) x = normal(rng) * 1e-3;
    for (auto& v : state.v)
      for (auto& x : v) x = std::abs(normal(rng)) * 1e-7;
    state.t = 123;
    auto path = dir.path() / (models::to_string(kind) + ".bin");
    checkpoint::save_checkpoint(path, *model, &state, 123, "rng-state", {{"seed", "0"}});
    auto data = checkpoint::load_checkpoint(path);
    CHECK(data.batch == 123);
    CHECK(data.rng_state == "rng-state");
    CHECK(data.meta.at("seed") == "0");
    CHECK(checkpoint::config_to_json(data.config) == checkpoint::config_to_json(model->config()));
    REQUIRE(data.params.size() == model->parameters().size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < data.params.size(); ++i) {
      CHECK(data.params[i].name == model->parameters()[i].name);
      CHECK(data.params[i].value == model->parameters()[i].value);
      total += data.params[i].size();
    }
    CHECK(total == models::expected_parameter_count(model->config()));
    REQUIRE(data.optimizer.has_value());
    CHECK(data.optimizer->m == state.m);
    CHECK(data.optimizer->v == state.v);
    CHECK(data.optimizer->t == 123);
  }
}

TEST_CASE("save, load, save gives byte-identical files") {
  TempDir dir("npf-ckpt2");
  auto model = models::make_model(models::ModelConfig::defaults(models::ModelKind::gpconvcnp), 9);
  checkpoint::save_checkpoint(dir.path() / "a.bin", *model, nullptr, 5, "s");
  auto loaded = checkpoint::load_model(dir.path() / "a.bin");
  checkpoint::save_checkpoint(dir.path() / "b.bin", *loaded, nullptr, 5, "s");
  CHECK(slurp(dir.path() / "a.bin") == slurp(dir.path() / "b.bin"));
}

TEST_CASE("loaded model gives bit-identical predictions") {
  TempDir dir("npf-ckpt3");
  Rng rng(10);
  Task t = make_task({-1.0, 0.2, 0.9}, {-0.5, 0.0, 1.3});
  for (auto kind : {models::ModelKind::anp, models::ModelKind::gpconvcnp}) {
    auto model = models::make_model(models::ModelConfig::defaults(kind), 11);
    checkpoint::save_checkpoint(dir.path() / "m.bin", *model, nullptr, 0, "");
    auto loaded = checkpoint::load_model(dir.path() / "m.bin");
    Rng r1(4), r2(4);
    auto a = models::forward(*model, t, 3, r1), b = models::forward(*loaded, t, 3, r2);
    for (std::size_t s = 0; s < a.size(); ++s) {
      CHECK(a.components[s].mean == b.components[s].mean);
      CHECK(a.components[s].std == b.components[s].std);
    }
  }
}

TEST_CASE("truncated, extended or foreign files are refused") {
  TempDir dir("npf-ckpt4");
  auto model = models::make_model(models::ModelConfig::defaults(models::ModelKind::convcnp), 12);
  auto good = dir.path() / "good.bin";
  checkpoint::save_checkpoint(good, *model, nullptr, 0, "");
  const std::string bytes = slurp(good);

  auto bad = dir.path() / "bad.bin";
  spit(bad, bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(checkpoint::load_checkpoint(bad), IncompatibleCheckpoint);
  CHECK_THROWS_AS(checkpoint::load_model(bad), IncompatibleCheckpoint);
  spit(bad, bytes + "x");
  CHECK_THROWS_AS(checkpoint::load_checkpoint(bad), IncompatibleCheckpoint);
  spit(bad, "not a checkpoint\n");
  CHECK_THROWS_AS(checkpoint::load_checkpoint(bad), IncompatibleCheckpoint);
  std::string other = bytes;
  other.replace(0, std::string("npf-checkpoint 1").size(), "npf-checkpoint 2");
  spit(bad, other);
  CHECK_THROWS_AS(checkpoint::load_checkpoint(bad), IncompatibleCheckpoint);
}

TEST_CASE("restoring into another architecture is refused") {
  TempDir dir("npf-ckpt5");
  auto conv = models::make_model(models::ModelConfig::defaults(models::ModelKind::convcnp), 1);
  auto np = models::make_model(models::ModelConfig::defaults(models::ModelKind::np), 1);
  checkpoint::save_checkpoint(dir.path() / "c.bin", *conv, nullptr, 0, "");
  auto data = checkpoint::load_checkpoint(dir.path() / "c.bin");
  CHECK_THROWS(checkpoint::restore_parameters(*np, data));
}

TEST_CASE("no temporary file is left behind") {
  TempDir dir("npf-ckpt6");
  auto model = models::make_model(models::ModelConfig::defaults(models::ModelKind::convcnp), 1);
  checkpoint::save_checkpoint(dir.path() / "c.bin", *model, nullptr, 0, "");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
}

TEST_CASE("model config json round trip") {
  auto c = models::ModelConfig::defaults(models::ModelKind::anp, 2);
  c.heads = 4;
  auto back = checkpoint::config_from_json(checkpoint::config_to_json(c));
  CHECK(back.kind == models::ModelKind::anp);
  CHECK(back.y_dim == 2);
  CHECK(back.heads == 4);
  CHECK(back.channel_plan == c.channel_plan);
}

}  // TEST_SUITE
