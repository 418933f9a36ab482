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

#include "npf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "npf/errors.hpp"

namespace npf::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint arrays are written in host order, which must be little-endian");

namespace {

constexpr const char* kMagic = "npf-checkpoint";

using nlohmann::json;

json config_json(const models::ModelConfig& c) {
  return {{"kind", models::to_string(c.kind)},
          {"y_dim", c.y_dim},
          {"hidden", c.hidden},
          {"hidden_layers", c.hidden_layers},
          {"latent", c.latent},
          {"heads", c.heads},
          {"projection_channels", c.projection_channels},
          {"channel_plan", c.channel_plan},
          {"kernel_width", c.kernel_width},
          {"points_per_unit", c.points_per_unit},
          {"grid_margin", c.grid_margin},
          {"init_lengthscale", c.init_lengthscale},
          {"init_noise", c.init_noise}};
}

models::ModelConfig config_of(const json& j) {
  models::ModelConfig c;
  const auto kind = models::model_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw IncompatibleCheckpoint("unknown model kind in checkpoint");
  c.kind = *kind;
  c.y_dim = j.at("y_dim");
  c.hidden = j.at("hidden");
  c.hidden_layers = j.at("hidden_layers");
  c.latent = j.at("latent");
  c.heads = j.at("heads");
  c.projection_channels = j.at("projection_channels");
  c.channel_plan = j.at("channel_plan").get<std::vector<std::size_t>>();
  c.kernel_width = j.at("kernel_width");
  c.points_per_unit = j.at("points_per_unit");
  c.grid_margin = j.at("grid_margin");
  c.init_lengthscale = j.at("init_lengthscale");
  c.init_noise = j.at("init_noise");
  return c;
}

void write_array(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_array(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double)))
    throw IncompatibleCheckpoint("checkpoint is truncated");
}

}  // namespace

std::string config_to_json(const models::ModelConfig& config) { return config_json(config).dump(); }

models::ModelConfig config_from_json(const std::string& text) {
  try {
    return config_of(json::parse(text));
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint(std::string("malformed model configuration: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const models::Model& model,
                     const training::OptimState* optimizer, std::uint64_t batch,
                     const std::string& rng_state, const std::map<std::string, std::string>& meta) {
  const auto& params = model.parameters().all();
  json manifest;
  manifest["version"] = kFormatVersion;
  manifest["model"] = config_json(model.config());
  manifest["batch"] = batch;
  manifest["rng_state"] = rng_state;
  manifest["meta"] = meta;
  json plist = json::array();
  for (const auto& p : params) plist.push_back({{"name", p.name}, {"shape", p.shape}});
  manifest["params"] = plist;
  manifest["optimizer"] = optimizer ? json{{"t", optimizer->t}} : json(nullptr);
  if (optimizer)
    NPF_REQUIRE(optimizer->m.size() == params.size() && optimizer->v.size() == params.size(),
                "save_checkpoint: optimiser state does not match parameters");

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << kMagic << ' ' << kFormatVersion << '\n' << manifest.dump() << '\n';
    for (const auto& p : params) write_array(out, p.value);
    if (optimizer) {
      for (const auto& m : optimizer->m) write_array(out, m);
      for (const auto& v : optimizer->v) write_array(out, v);
    }
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IncompatibleCheckpoint("cannot open checkpoint " + path.string());
  std::string magic_line, manifest_line;
  if (!std::getline(in, magic_line)) throw IncompatibleCheckpoint("empty checkpoint file");
  std::istringstream ml(magic_line);
  std::string magic;
  int version = -1;
  ml >> magic >> version;
  if (magic != kMagic) throw IncompatibleCheckpoint("not a checkpoint file: " + path.string());
  if (version != kFormatVersion)
    throw IncompatibleCheckpoint("checkpoint format version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  if (!std::getline(in, manifest_line)) throw IncompatibleCheckpoint("checkpoint is truncated");

  CheckpointData data;
  json manifest;
  try {
    manifest = json::parse(manifest_line);
    data.version = manifest.at("version");
    data.config = config_of(manifest.at("model"));
    data.batch = manifest.at("batch");
    data.rng_state = manifest.at("rng_state");
    data.meta = manifest.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& p : manifest.at("params")) {
      auto shape = p.at("shape").get<ad::Shape>();
      const std::size_t n = ad::numel(shape);
      data.params.emplace_back(p.at("name").get<std::string>(), std::move(shape),
                               std::vector<double>(n, 0.0));
    }
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (data.version != kFormatVersion) throw IncompatibleCheckpoint("manifest version mismatch");

  for (auto& p : data.params) read_array(in, p.value);
  if (!manifest.at("optimizer").is_null()) {
    training::OptimState s;
    s.t = manifest.at("optimizer").at("t");
    for (const auto& p : data.params) s.m.emplace_back(p.value.size(), 0.0);
    for (const auto& p : data.params) s.v.emplace_back(p.value.size(), 0.0);
    for (auto& m : s.m) read_array(in, m);
    for (auto& v : s.v) read_array(in, v);
    data.optimizer = std::move(s);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw IncompatibleCheckpoint("checkpoint has trailing bytes");
  return data;
}

void restore_parameters(models::Model& model, const CheckpointData& data) {
  auto& params = model.parameters().all();
  if (params.size() != data.params.size())
    throw IncompatibleCheckpoint("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name != data.params[i].name || params[i].shape != data.params[i].shape)
      throw IncompatibleCheckpoint("checkpoint parameter " + data.params[i].name +
                                   " does not match model parameter " + params[i].name);
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = data.params[i].value;
}

std::unique_ptr<models::Model> load_model(const std::filesystem::path& path) {
  const auto data = load_checkpoint(path);
  auto model = models::make_model(data.config, 0);
  restore_parameters(*model, data);
  return model;
}

}  // namespace npf::checkpoint
