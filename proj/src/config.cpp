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

#include "npf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace npf {

namespace {

enum class Kind { text, uint, real, flag, seed_list };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* fallback;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s{
      {"model", Kind::text, ""},
      {"dataset", Kind::text, "matern"},
      {"mode", Kind::text, ""},
      {"seeds", Kind::seed_list, ""},
      {"output", Kind::text, ""},
      {"data", Kind::text, ""},
      {"checkpoint", Kind::text, ""},
      {"baseline", Kind::text, ""},
      {"desk_scale", Kind::flag, "false"},
      {"total_batches", Kind::uint, ""},
      {"batch_size", Kind::uint, ""},
      {"lr", Kind::real, ""},
      {"gamma", Kind::real, ""},
      {"decay_every", Kind::uint, ""},
      {"log_every", Kind::uint, ""},
      {"checkpoint_every", Kind::uint, ""},
      {"tasks", Kind::uint, "2048"},
      {"samples", Kind::uint, "20"},
      {"w2_samples", Kind::uint, "20"},
      {"w2_tasks", Kind::uint, "0"},
      {"eq_fit", Kind::text, "marginal"},
      {"eq_fit_tasks", Kind::uint, "256"},
      {"plot", Kind::uint, "0"},
  };
  return s;
}

const KeySpec* find(const std::string& key) {
  for (const auto& k : schema())
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool parse_uint(const std::string& v, std::uint64_t& out) {
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size();
}

bool parse_real(const std::string& v, double& out) {
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size();
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::uint64_t s = 0;
    if (!parse_uint(trim(item), s)) throw UsageError("invalid seed '" + item + "'");
    seeds.push_back(s);
  }
  return seeds;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.key] = k.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> out;
    for (const auto& k : schema()) out.emplace_back(k.key);
    return out;
  }();
  return ks;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const KeySpec* spec = find(key);
  if (!spec) throw UsageError("unknown configuration key '" + key + "'");
  const std::string value = trim(raw);
  // Keys without a default may be written back unset.
  if (value.empty() && *spec->fallback == '\0') {
    values_[key] = value;
    return;
  }
  switch (spec->kind) {
    case Kind::uint: {
      std::uint64_t v = 0;
      if (!parse_uint(value, v)) throw UsageError(key + ": expected a non-negative integer, got '" + value + "'");
      break;
    }
    case Kind::real: {
      double v = 0.0;
      if (!parse_real(value, v)) throw UsageError(key + ": expected a number, got '" + value + "'");
      break;
    }
    case Kind::flag:
      if (value != "true" && value != "false") throw UsageError(key + ": expected true or false");
      break;
    case Kind::seed_list:
      parse_seeds(value);
      break;
    case Kind::text:
      break;
  }
  values_[key] = value;
}

bool RunConfig::is_set(const std::string& key) const {
  if (!find(key)) throw UsageError("unknown configuration key '" + key + "'");
  return !values_.at(key).empty();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::stringstream ss(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key=value");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string& RunConfig::str(const std::string& key) const {
  if (!find(key)) throw UsageError("unknown configuration key '" + key + "'");
  return values_.at(key);
}

std::uint64_t RunConfig::uint(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_uint(str(key), v)) throw UsageError(key + " is not set");
  return v;
}

double RunConfig::real(const std::string& key) const {
  double v = 0.0;
  if (!parse_real(str(key), v)) throw UsageError(key + " is not set");
  return v;
}

bool RunConfig::flag(const std::string& key) const { return str(key) == "true"; }

std::vector<std::uint64_t> RunConfig::seeds() const { return parse_seeds(str("seeds")); }

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig c = flag("desk_scale") ? training::TrainConfig::desk_scale() : training::TrainConfig{};
  if (is_set("total_batches")) c.total_batches = uint("total_batches");
  if (is_set("batch_size")) c.batch_size = uint("batch_size");
  if (is_set("lr")) c.lr = real("lr");
  if (is_set("gamma")) c.gamma = real("gamma");
  if (is_set("decay_every")) c.decay_every = uint("decay_every");
  if (is_set("log_every")) c.log_every = uint("log_every");
  if (is_set("checkpoint_every")) c.checkpoint_every = uint("checkpoint_every");
  const auto s = seeds();
  if (!s.empty()) c.seed = s.front();
  return c;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& k : schema()) os << k.key << '=' << values_.at(k.key) << '\n';
  return os.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << to_text();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace npf
