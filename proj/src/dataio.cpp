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

#include "npf/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "npf/errors.hpp"

namespace npf::dataio {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string s) {
  const auto keep = [](unsigned char c) { return !std::isspace(c) && c != '"'; };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), keep));
  s.erase(std::find_if(s.rbegin(), s.rend(), keep).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA";
}

std::size_t draw_index(Rng& rng, std::size_t lo, std::size_t hi_inclusive) {
  return std::uniform_int_distribution<std::size_t>(lo, hi_inclusive)(rng);
}

// First k entries of a uniform permutation of [lo, hi).
std::vector<std::size_t> distinct(Rng& rng, std::size_t lo, std::size_t hi, std::size_t k) {
  std::vector<std::size_t> idx(hi - lo);
  std::iota(idx.begin(), idx.end(), lo);
  NPF_REQUIRE(k <= idx.size(), "not enough points to draw from");
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[draw_index(rng, i, idx.size() - 1)]);
  idx.resize(k);
  return idx;
}

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string to_string(TemperatureMode m) {
  return m == TemperatureMode::interpolation ? "interpolation" : "extrapolation";
}

bool is_test_city(const std::string& name) {
  static const std::vector<std::string> israeli{"Beersheba", "Tel Aviv District", "Eilat",
                                                "Haifa",     "Nahariyya",         "Jerusalem"};
  return std::find(israeli.begin(), israeli.end(), name) != israeli.end();
}

std::vector<double> crop_and_fill(const std::vector<double>& raw) {
  const auto present = [](double v) { return !std::isnan(v); };
  const auto first = std::find_if(raw.begin(), raw.end(), present);
  if (first == raw.end()) return {};
  const auto last = std::find_if(raw.rbegin(), raw.rend(), present).base();
  std::vector<double> out(first, last);
  std::size_t prev = 0;
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (std::isnan(out[i])) continue;
    for (std::size_t k = prev + 1; k < i; ++k) {
      const double t = static_cast<double>(k - prev) / static_cast<double>(i - prev);
      out[k] = out[prev] + t * (out[i] - out[prev]);
    }
    prev = i;
  }
  return out;
}

std::vector<CitySeries> load_temperature_csv(const std::filesystem::path& path,
                                             std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string(), 0);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw IngestionError("empty temperature file", line_no);
  const auto header = split_csv(line);
  if (header.size() < 2) throw IngestionError("expected a datetime column and city columns", line_no);
  const std::size_t cities = header.size() - 1;
  std::vector<std::vector<double>> raw(cities);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw IngestionError("expected " + std::to_string(header.size()) + " fields, found " +
                               std::to_string(cells.size()),
                           line_no);
    for (std::size_t c = 0; c < cities; ++c) {
      const std::string& cell = cells[c + 1];
      if (is_missing(cell)) {
        raw[c].push_back(kMissing);
        continue;
      }
      const auto v = parse_number(cell);
      if (!v) throw IngestionError("unparseable value '" + cell + "' for " + header[c + 1], line_no);
      raw[c].push_back(*v);
    }
  }

  std::vector<CitySeries> out;
  for (std::size_t c = 0; c < cities; ++c) {
    CitySeries s;
    s.name = header[c + 1];
    s.split = is_test_city(s.name) ? Split::test : Split::train;
    s.values = crop_and_fill(raw[c]);
    if (s.values.empty()) {
      if (warnings) warnings->push_back("skipping " + s.name + ": no values");
      continue;
    }
    const double n = static_cast<double>(s.values.size());
    s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : s.values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / n);
    if (!(s.std > 0.0)) {
      if (warnings) warnings->push_back("skipping " + s.name + ": constant series");
      continue;
    }
    for (double& v : s.values) v = (v - s.mean) / s.std;
    out.push_back(std::move(s));
  }
  return out;
}

double window_time(std::size_t hour) {
  return (static_cast<double>(hour) + 0.5) * kTemperatureSpan / static_cast<double>(kTemperatureWindow);
}

Task make_temperature_task(const CitySeries& series, TemperatureMode mode, Rng& rng,
                           bool join_context) {
  if (series.values.size() < kTemperatureWindow)
    throw GenerationError(series.name + ": series shorter than " +
                          std::to_string(kTemperatureWindow) + " hours");
  const std::size_t start = draw_index(rng, 0, series.values.size() - kTemperatureWindow);
  const std::size_t n = draw_index(rng, 20, 99);
  const std::size_t m = draw_index(rng, n, 99);
  const std::size_t half = kTemperatureWindow / 2;

  std::vector<std::size_t> ctx, tgt;
  if (mode == TemperatureMode::interpolation) {
    auto idx = distinct(rng, 0, kTemperatureWindow, n + m);
    ctx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
    tgt.assign(idx.begin() + static_cast<std::ptrdiff_t>(join_context ? 0 : n), idx.end());
  } else {
    ctx = distinct(rng, 0, half, n);
    tgt = distinct(rng, half, kTemperatureWindow, m);
  }
  Task task;
  task.tag = "temperature/" + to_string(mode);
  task.params["window_start"] = static_cast<double>(start);
  for (std::size_t h : ctx) {
    task.x_context.push_back(window_time(h));
    task.y_context.push_back(series.values[start + h]);
  }
  for (std::size_t h : tgt) {
    task.x_target.push_back(window_time(h));
    task.y_target.push_back(series.values[start + h]);
  }
  return task;
}

datagen::TaskSource temperature_source(std::vector<CitySeries> cities, Split split,
                                       TemperatureMode mode, bool join_context) {
  std::erase_if(cities, [&](const CitySeries& c) {
    return c.split != split || c.values.size() < kTemperatureWindow;
  });
  if (cities.empty())
    throw GenerationError("no " + to_string(split) + " city has " +
                          std::to_string(kTemperatureWindow) + " hours of data");
  return [cities = std::move(cities), mode, join_context](Rng& rng) {
    const auto& city = cities[draw_index(rng, 0, cities.size() - 1)];
    return make_temperature_task(city, mode, rng, join_context);
  };
}

// ---------------------------------------------------------------- lynx-hare

LynxHare load_lynx_hare(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string(), 0);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw IngestionError("empty lynx-hare file", line_no);
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestionError("missing column '" + name + "'", line_no);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cy = column("year"), ch = column("hare"), cl = column("lynx");
  LynxHare data;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw IngestionError("expected " + std::to_string(header.size()) + " fields", line_no);
    const auto y = parse_number(cells[cy]), h = parse_number(cells[ch]), l = parse_number(cells[cl]);
    if (!y || !h || !l) throw IngestionError("unparseable row", line_no);
    if (*h < 0.0 || *l < 0.0) throw IngestionError("negative population", line_no);
    if (!data.years.empty() && *y <= data.years.back())
      throw IngestionError("years must be strictly increasing", line_no);
    data.years.push_back(*y);
    data.hare.push_back(*h);
    data.lynx.push_back(*l);
  }
  if (data.size() < 4) throw IngestionError("lynx-hare table needs at least 4 rows", line_no);
  return data;
}

PopulationReference estimate_population_reference(std::size_t simulations, std::uint64_t seed) {
  NPF_REQUIRE(simulations > 0, "population reference needs at least one simulation");
  Rng rng(seed);
  PopulationReference ref;
  double pop_sum = 0.0, duration_sum = 0.0;
  for (std::size_t s = 0; s < simulations; ++s) {
    const auto tr = datagen::simulate_accepted(rng);
    double total = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i)
      total += static_cast<double>(tr.predators[i] + tr.prey[i]);
    pop_sum += total * datagen::kPopulationScale / (2.0 * static_cast<double>(tr.size()));
    duration_sum += (tr.times.back() - tr.times.front()) * datagen::kTimeScale;
  }
  ref.simulations = simulations;
  ref.mean_population = pop_sum / static_cast<double>(simulations);
  ref.mean_duration = duration_sum / static_cast<double>(simulations);
  return ref;
}

PopulationSeries normalize_lynx_hare(const LynxHare& data, const PopulationReference& ref) {
  NPF_REQUIRE(data.size() >= 2, "normalize_lynx_hare: need at least two rows");
  NPF_REQUIRE(ref.mean_population > 0.0 && ref.mean_duration > 0.0,
              "normalize_lynx_hare: invalid reference");
  double mean = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) mean += data.hare[i] + data.lynx[i];
  mean /= 2.0 * static_cast<double>(data.size());
  NPF_REQUIRE(mean > 0.0, "normalize_lynx_hare: all populations are zero");
  PopulationSeries s;
  s.population_scale = ref.mean_population / mean;
  s.time_scale = ref.mean_duration / (data.years.back() - data.years.front());
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.x.push_back((data.years[i] - data.years.front()) * s.time_scale);
    s.y.push_back(data.lynx[i] * s.population_scale);
    s.y.push_back(data.hare[i] * s.population_scale);
  }
  return s;
}

Task lynx_hare_contiguous_task(const PopulationSeries& series, std::size_t first, std::size_t length) {
  NPF_REQUIRE(length > 0 && first + length <= series.size(), "contiguous block out of range");
  NPF_REQUIRE(length < series.size(), "contiguous block leaves no context");
  Task task;
  task.y_dim = 2;
  task.tag = "lynx_hare/contiguous";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const bool target = i >= first && i < first + length;
    (target ? task.x_target : task.x_context).push_back(series.x[i]);
    auto& ys = target ? task.y_target : task.y_context;
    ys.push_back(series.y[2 * i]);
    ys.push_back(series.y[2 * i + 1]);
  }
  return task;
}

Task lynx_hare_random_task(const PopulationSeries& series, Rng& rng) {
  NPF_REQUIRE(series.size() >= 6, "random lynx-hare task needs at least 6 points");
  const std::size_t n = draw_index(rng, 3, series.size() / 2);
  const auto idx = distinct(rng, 0, series.size(), series.size());
  Task task;
  task.y_dim = 2;
  task.tag = "lynx_hare/random";
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    (k < n ? task.x_context : task.x_target).push_back(series.x[i]);
    auto& ys = k < n ? task.y_context : task.y_target;
    ys.push_back(series.y[2 * i]);
    ys.push_back(series.y[2 * i + 1]);
  }
  return task;
}

}  // namespace npf::dataio
