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

#include "npf/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "npf/errors.hpp"

namespace npf::plot {

PlotData build_plot_data(eval::Predictor& predictor, const Task& task, std::size_t dim,
                         std::size_t samples, eval::Rng& rng, std::size_t resolution) {
  NPF_REQUIRE(dim < task.y_dim, "plot: output dimension out of range");
  NPF_REQUIRE(resolution >= 2, "plot: need at least two evaluation points");
  PlotData d;
  d.title = predictor.name() + " / " + task.tag;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* xs : {&task.x_context, &task.x_target})
    for (double x : *xs) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  Task dense = task;
  dense.x_target.resize(resolution);
  for (std::size_t i = 0; i < resolution; ++i)
    dense.x_target[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  dense.y_target.assign(resolution * task.y_dim, 0.0);
  d.x = dense.x_target;

  const auto pred = predictor.predict(dense, std::max<std::size_t>(samples, 1), rng);
  const std::size_t dy = task.y_dim;
  const double s = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < resolution; ++i) {
    const std::size_t k = i * dy + dim;
    double m = 0.0, second = 0.0;
    for (const auto& c : pred.components) {
      m += c.mean[k] / s;
      second += (c.std[k] * c.std[k] + c.mean[k] * c.mean[k]) / s;
    }
    const double sd = std::sqrt(std::max(0.0, second - m * m));
    d.mean.push_back(m);
    d.lower.push_back(m - sd);
    d.upper.push_back(m + sd);
  }
  if (samples > 0)
    if (auto curves = predictor.sample_curves(dense, samples, rng))
      for (const auto& c : *curves) {
        std::vector<double> one(resolution);
        for (std::size_t i = 0; i < resolution; ++i) one[i] = c[i * dy + dim];
        d.samples.push_back(std::move(one));
      }
  for (std::size_t i = 0; i < task.num_context(); ++i) {
    d.context_x.push_back(task.x_context[i]);
    d.context_y.push_back(task.y_context[i * dy + dim]);
  }
  for (std::size_t i = 0; i < task.num_target(); ++i) {
    d.target_x.push_back(task.x_target[i]);
    d.target_y.push_back(task.y_target[i * dy + dim]);
  }
  return d;
}

void write_csv(const std::filesystem::path& path, const PlotData& d) {
  std::ofstream out(path, std::ios::trunc);
  out << std::setprecision(10) << "series,x,y\n";
  auto series = [&](const std::string& name, const std::vector<double>& xs, const std::vector<double>& ys) {
    for (std::size_t i = 0; i < xs.size(); ++i) out << name << ',' << xs[i] << ',' << ys[i] << '\n';
  };
  series("mean", d.x, d.mean);
  series("lower", d.x, d.lower);
  series("upper", d.x, d.upper);
  for (std::size_t k = 0; k < d.samples.size(); ++k) series("sample_" + std::to_string(k), d.x, d.samples[k]);
  series("context", d.context_x, d.context_y);
  series("target", d.target_x, d.target_y);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string to_svg(const PlotData& d, int width, int height) {
  const double margin = 40.0;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  auto extend = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
    for (double x : xs) xlo = std::min(xlo, x), xhi = std::max(xhi, x);
    for (double y : ys)
      if (std::isfinite(y)) ylo = std::min(ylo, y), yhi = std::max(yhi, y);
  };
  extend(d.x, d.lower);
  extend(d.x, d.upper);
  extend(d.context_x, d.context_y);
  extend(d.target_x, d.target_y);
  for (const auto& s : d.samples) extend(d.x, s);
  if (!(xhi > xlo)) xhi = xlo + 1.0;
  if (!(yhi > ylo)) yhi = ylo + 1.0;
  const double pad = 0.05 * (yhi - ylo);
  ylo -= pad;
  yhi += pad;
  auto px = [&](double x) { return margin + (x - xlo) / (xhi - xlo) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - ylo) / (yhi - ylo) * (height - 2 * margin); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << margin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">"
     << escape(d.title) << "</text>\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin
     << "\" height=\"" << height - 2 * margin << "\" fill=\"none\" stroke=\"#888\"/>\n";

  if (!d.x.empty()) {
    os << "<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < d.x.size(); ++i) os << px(d.x[i]) << ',' << py(d.upper[i]) << ' ';
    for (std::size_t i = d.x.size(); i-- > 0;) os << px(d.x[i]) << ',' << py(d.lower[i]) << ' ';
    os << "\"/>\n";
  }
  auto line = [&](const std::vector<double>& ys, const char* colour, double w, double opacity) {
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << w
       << "\" stroke-opacity=\"" << opacity << "\" points=\"";
    for (std::size_t i = 0; i < d.x.size(); ++i) os << px(d.x[i]) << ',' << py(ys[i]) << ' ';
    os << "\"/>\n";
  };
  for (const auto& s : d.samples) line(s, "#ff7f0e", 1.0, 0.5);
  if (!d.x.empty()) line(d.mean, "#1f77b4", 2.0, 1.0);
  for (std::size_t i = 0; i < d.target_x.size(); ++i)
    os << "<circle cx=\"" << px(d.target_x[i]) << "\" cy=\"" << py(d.target_y[i])
       << "\" r=\"2.5\" fill=\"#2ca02c\"/>\n";
  for (std::size_t i = 0; i < d.context_x.size(); ++i)
    os << "<circle cx=\"" << px(d.context_x[i]) << "\" cy=\"" << py(d.context_y[i])
       << "\" r=\"3.5\" fill=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

void write_svg(const std::filesystem::path& path, const PlotData& data) {
  std::ofstream out(path, std::ios::trunc);
  out << to_svg(data);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace npf::plot
