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

#include "npf/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace npf::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                            to_string(b.shape()));
  }
}

void require_same_tape(Var a, Var b) {
  NPF_REQUIRE(a.valid() && b.valid(), "uninitialised Var");
  NPF_REQUIRE(&a.tape() == &b.tape(), "operands recorded on different tapes");
}

// Splits shape around `axis` into (outer, n, inner).
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit out;
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  out.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) out.inner *= s[i];
  return out;
}

template <class F, class DF>
Var unary(Var x, Op op, F f, DF df) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xi = x.id();
  return x.tape().record(op, x.shape(), std::move(out), {x},
                         [xi, df](Tape& t, std::span<const double> g) {
                           double* gx = t.grad_target(xi);
                           if (!gx) return;
                           const auto& xv = t.value(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i]);
                         });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::matmul: return "matmul";
    case Op::conv1d_same: return "conv1d_same";
    case Op::relu: return "relu";
    case Op::softplus: return "softplus";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::square: return "square";
    case Op::mean: return "mean";
    case Op::sum: return "sum";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::broadcast: return "broadcast";
    case Op::softmax_lastdim: return "softmax_lastdim";
    case Op::transpose: return "transpose";
    case Op::reshape: return "reshape";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::clamp_min: return "clamp_min";
    case Op::cholesky: return "cholesky";
    case Op::solve_lower: return "solve_lower";
  }
  return "?";
}

Parameter::Parameter(std::string n, Shape s, std::vector<double> v)
    : name(std::move(n)), shape(std::move(s)), value(std::move(v)), grad(value.size(), 0.0) {
  NPF_REQUIRE(numel(shape) == value.size(), "parameter " + name + ": shape/value size mismatch");
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// ---------------------------------------------------------------- Var

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::values() const { return tape_->value(id_); }
std::size_t Var::size() const { return tape_->value(id_).size(); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
  NPF_REQUIRE(size() == 1, "item() on non-scalar " + to_string(shape()));
  return values()[0];
}

// ---------------------------------------------------------------- Tape

Tape::Tape(bool grad_enabled) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

Var Tape::push(Node node) {
  NPF_REQUIRE(numel(node.shape) == node.value.size(),
              std::string(op_name(node.op)) + ": value size does not match shape " +
                  to_string(node.shape));
  NPF_REQUIRE(!consumed_, "recording onto a tape after backward");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Shape shape, std::vector<double> values) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  return push(std::move(n));
}

Var Tape::variable(Shape shape, std::vector<double> values) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.shape = p.shape;
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  return push(std::move(n));
}

Var Tape::record(Op op, Shape shape, std::vector<double> value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  return record(op, std::move(shape), std::move(value), std::vector<Var>(parents),
                std::move(backward));
}

Var Tape::record(Op op, Shape shape, std::vector<double> value, const std::vector<Var>& parents,
                 BackwardFn backward) {
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    NPF_REQUIRE(&p.tape() == this, std::string(op_name(op)) + ": operand from another tape");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

double* Tape::grad_target(std::size_t id) {
  if (!nodes_[id].requires_grad) return nullptr;
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g.data();
}

void Tape::backward(Var loss) {
  NPF_REQUIRE(loss.valid() && &loss.tape() == this, "backward: loss not on this tape");
  NPF_REQUIRE(loss.size() == 1, "backward: loss must be scalar, got " + to_string(loss.shape()));
  NPF_REQUIRE(!consumed_, "backward: tape already consumed");
  consumed_ = true;
  grads_.assign(nodes_.size(), {});
  if (!nodes_[loss.id()].requires_grad) return;
  grads_[loss.id()] = {1.0};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads_[i].empty()) continue;
    if (n.backward) n.backward(*this, grads_[i]);
    if (n.param) {
      for (std::size_t k = 0; k < grads_[i].size(); ++k) n.param->grad[k] += grads_[i][k];
    }
  }
}

bool Tape::has_grad(Var v) const { return v.id() < grads_.size() && !grads_[v.id()].empty(); }

std::span<const double> Tape::grad(Var v) const {
  NPF_REQUIRE(has_grad(v), "no gradient recorded for node");
  return grads_[v.id()];
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Op::add, a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::span<const double> g) {
                           if (double* ga = t.grad_target(ai))
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           if (double* gb = t.grad_target(bi))
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                         });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Op::sub, a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::span<const double> g) {
                           if (double* ga = t.grad_target(ai))
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           if (double* gb = t.grad_target(bi))
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                         });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Op::mul, a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::span<const double> g) {
                           const auto& av = t.value(ai);
                           const auto& bv = t.value(bi);
                           if (double* ga = t.grad_target(ai))
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                           if (double* gb = t.grad_target(bi))
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                         });
}

Var div(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "div");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Op::div, a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::span<const double> g) {
                           const auto& av = t.value(ai);
                           const auto& bv = t.value(bi);
                           if (double* ga = t.grad_target(ai))
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
                           if (double* gb = t.grad_target(bi))
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                         });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  NPF_REQUIRE(a.shape().size() == 2 && b.shape().size() == 2,
              "matmul: rank-2 operands required, got " + to_string(a.shape()) + " and " +
                  to_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  NPF_REQUIRE(b.shape()[0] == k,
              "matmul: inner dimension mismatch " + to_string(a.shape()) + " . " +
                  to_string(b.shape()));
  std::vector<double> out(m * n);
  Map(out.data(), m, n).noalias() = MapC(a.values().data(), m, k) * MapC(b.values().data(), k, n);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Op::matmul, {m, n}, std::move(out), {a, b},
                         [ai, bi, m, k, n](Tape& t, std::span<const double> g) {
                           MapC G(g.data(), m, n);
                           if (double* ga = t.grad_target(ai))
                             Map(ga, m, k).noalias() += G * MapC(t.value(bi).data(), k, n).transpose();
                           if (double* gb = t.grad_target(bi))
                             Map(gb, k, n).noalias() += MapC(t.value(ai).data(), m, k).transpose() * G;
                         });
}

Var conv1d_same(Var x, Var w) {
  require_same_tape(x, w);
  NPF_REQUIRE(x.shape().size() == 2, "conv1d_same: input must be (channels x length)");
  NPF_REQUIRE(w.shape().size() == 3, "conv1d_same: weight must be (out x in x width)");
  const std::size_t cin = x.shape()[0], len = x.shape()[1];
  const std::size_t cout = w.shape()[0], width = w.shape()[2];
  NPF_REQUIRE(w.shape()[1] == cin, "conv1d_same: weight expects " + std::to_string(w.shape()[1]) +
                                       " input channels, got " + std::to_string(cin));
  NPF_REQUIRE(width % 2 == 1, "conv1d_same: kernel width must be odd");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(width / 2);
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(len);

  // im2col: cols[(c*width + j), t] = x[c, t + j - pad]
  auto cols = std::make_shared<std::vector<double>>(cin * width * len, 0.0);
  auto xv = x.values();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t j = 0; j < width; ++j) {
      double* row = cols->data() + (c * width + j) * len;
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - off);
      for (std::ptrdiff_t t = lo; t < hi; ++t) row[t] = xv[c * len + t + off];
    }
  }
  std::vector<double> out(cout * len);
  const std::size_t kk = cin * width;
  Map(out.data(), cout, len).noalias() =
      MapC(w.values().data(), cout, kk) * MapC(cols->data(), kk, len);
  const auto xi = x.id(), wi = w.id();
  if (!x.requires_grad() && !w.requires_grad()) cols.reset();
  return x.tape().record(
      Op::conv1d_same, {cout, len}, std::move(out), {x, w},
      [xi, wi, cols, cin, cout, width, len, kk, pad, L](Tape& t, std::span<const double> g) {
        MapC G(g.data(), cout, len);
        if (double* gw = t.grad_target(wi))
          Map(gw, cout, kk).noalias() += G * MapC(cols->data(), kk, len).transpose();
        if (double* gx = t.grad_target(xi)) {
          RowMat dcols = MapC(t.value(wi).data(), cout, kk).transpose() * G;
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t j = 0; j < width; ++j) {
              const double* row = dcols.data() + (c * width + j) * len;
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
              const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
              const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - off);
              for (std::ptrdiff_t tt = lo; tt < hi; ++tt) gx[c * len + tt + off] += row[tt];
            }
          }
        }
      });
}

// ---------------------------------------------------------------- unary

Var relu(Var x) {
  return unary(
      x, Op::relu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var x) {
  return unary(
      x, Op::softplus, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var exp(Var x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::exp(xv[i]);
  const auto xi = x.id();
  Tape& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(Op::exp, x.shape(), std::move(out), {x},
                     [xi, self](Tape& t, std::span<const double> g) {
                       double* gx = t.grad_target(xi);
                       if (!gx) return;
                       const auto& y = t.value(self);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
                     });
}

Var log(Var x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      x, Op::log, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var sqrt(Var x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError("sqrt of non-positive value " + std::to_string(v));
  }
  return unary(
      x, Op::sqrt, [](double v) { return std::sqrt(v); },
      [](double v) { return 0.5 / std::sqrt(v); });
}

Var square(Var x) {
  return unary(
      x, Op::square, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var scale(Var x, double c) {
  return unary(
      x, Op::scale, [c](double v) { return c * v; }, [c](double) { return c; });
}

Var shift(Var x, double c) {
  return unary(
      x, Op::shift, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

Var clamp_min(Var x, double floor) {
  return unary(
      x, Op::clamp_min, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v) { return v > floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

Var sum(Var x) {
  auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  const auto xi = x.id();
  return x.tape().record(Op::sum, {}, {s}, {x}, [xi](Tape& t, std::span<const double> g) {
    double* gx = t.grad_target(xi);
    if (!gx) return;
    const std::size_t n = t.value(xi).size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
  });
}

Var mean(Var x) {
  NPF_REQUIRE(x.size() > 0, "mean of empty array");
  auto xv = x.values();
  const double n = static_cast<double>(xv.size());
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0) / n;
  const auto xi = x.id();
  return x.tape().record(Op::mean, {}, {s}, {x}, [xi, n](Tape& t, std::span<const double> g) {
    double* gx = t.grad_target(xi);
    if (!gx) return;
    const std::size_t len = t.value(xi).size();
    for (std::size_t i = 0; i < len; ++i) gx[i] += g[0] / n;
  });
}

namespace {

Var reduce_axis(Var x, std::size_t axis, bool average) {
  NPF_REQUIRE(axis < x.shape().size(), "reduction axis out of range for " + to_string(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  NPF_REQUIRE(s.n > 0 || !average, "mean over empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const double factor = average ? 1.0 / static_cast<double>(s.n) : 1.0;
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < s.n; ++a)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += xv[(o * s.n + a) * s.inner + i];
  if (average)
    for (double& v : out) v *= factor;
  const auto xi = x.id();
  return x.tape().record(average ? Op::mean : Op::sum, std::move(out_shape), std::move(out), {x},
                         [xi, s, factor](Tape& t, std::span<const double> g) {
                           double* gx = t.grad_target(xi);
                           if (!gx) return;
                           for (std::size_t o = 0; o < s.outer; ++o)
                             for (std::size_t a = 0; a < s.n; ++a)
                               for (std::size_t i = 0; i < s.inner; ++i)
                                 gx[(o * s.n + a) * s.inner + i] += factor * g[o * s.inner + i];
                         });
}

}  // namespace

Var sum(Var x, std::size_t axis) { return reduce_axis(x, axis, false); }
Var mean(Var x, std::size_t axis) { return reduce_axis(x, axis, true); }

// ---------------------------------------------------------------- structure

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  NPF_REQUIRE(!xs.empty(), "concat of nothing");
  const Shape& ref = xs.front().shape();
  NPF_REQUIRE(axis < ref.size(), "concat axis out of range for " + to_string(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const Var& v : xs) {
    require_same_tape(xs.front(), v);
    NPF_REQUIRE(v.shape().size() == ref.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && v.shape()[d] != ref[d])
        throw ContractViolation("concat: shape mismatch " + to_string(v.shape()) + " vs " +
                                to_string(ref));
    }
    out_shape[axis] += v.shape()[axis];
  }
  const AxisSplit os = split_axis(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  for (const Var& v : xs) {
    const std::size_t w = v.shape()[axis] * os.inner;
    auto vv = v.values();
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(vv.data() + o * w, w, out.data() + o * os.n * os.inner + offset);
    ids.push_back(v.id());
    widths.push_back(w);
    offset += w;
  }
  return xs.front().tape().record(
      Op::concat, std::move(out_shape), std::move(out), xs,
      [ids, widths, os](Tape& t, std::span<const double> g) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t w = widths[k];
          if (double* gx = t.grad_target(ids[k])) {
            for (std::size_t o = 0; o < os.outer; ++o) {
              const double* src = g.data() + o * os.n * os.inner + offset;
              for (std::size_t i = 0; i < w; ++i) gx[o * w + i] += src[i];
            }
          }
          offset += w;
        }
      });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  NPF_REQUIRE(axis < x.shape().size(), "slice axis out of range for " + to_string(x.shape()));
  NPF_REQUIRE(start + length <= x.shape()[axis], "slice [" + std::to_string(start) + ", " +
                                                     std::to_string(start + length) +
                                                     ") exceeds " + to_string(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  auto xv = x.values();
  const std::size_t w = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.data() + (o * s.n + start) * s.inner, w, out.data() + o * w);
  const auto xi = x.id();
  return x.tape().record(Op::slice, std::move(out_shape), std::move(out), {x},
                         [xi, s, start, w](Tape& t, std::span<const double> g) {
                           double* gx = t.grad_target(xi);
                           if (!gx) return;
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             double* dst = gx + (o * s.n + start) * s.inner;
                             for (std::size_t i = 0; i < w; ++i) dst[i] += g[o * w + i];
                           }
                         });
}

Var broadcast(Var x, const Shape& shape) {
  const Shape& in = x.shape();
  NPF_REQUIRE(in.size() <= shape.size(),
              "broadcast: cannot reduce rank " + to_string(in) + " -> " + to_string(shape));
  const std::size_t rank = shape.size();
  const std::size_t lead = rank - in.size();
  // Input strides aligned to the output axes, zero on expanded axes.
  std::vector<std::size_t> stride(rank, 0);
  std::size_t acc = 1;
  for (std::size_t d = rank; d-- > lead;) {
    const std::size_t extent = in[d - lead];
    if (extent != shape[d] && extent != 1)
      throw ContractViolation("broadcast: incompatible " + to_string(in) + " -> " +
                              to_string(shape));
    stride[d] = extent == 1 ? 0 : acc;
    acc *= extent;
  }
  const std::size_t total = numel(shape);
  std::vector<std::size_t> index(total);
  {
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t i = 0; i < total; ++i) {
      index[i] = src;
      for (std::size_t d = rank; d-- > 0;) {
        ++counter[d];
        src += stride[d];
        if (counter[d] < shape[d]) break;
        src -= stride[d] * counter[d];
        counter[d] = 0;
      }
    }
  }
  auto xv = x.values();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[index[i]];
  const auto xi = x.id();
  return x.tape().record(Op::broadcast, shape, std::move(out), {x},
                         [xi, index = std::move(index)](Tape& t, std::span<const double> g) {
                           double* gx = t.grad_target(xi);
                           if (!gx) return;
                           for (std::size_t i = 0; i < g.size(); ++i) gx[index[i]] += g[i];
                         });
}

Var softmax_lastdim(Var x) {
  NPF_REQUIRE(!x.shape().empty(), "softmax_lastdim on a scalar");
  const std::size_t n = x.shape().back();
  NPF_REQUIRE(n > 0, "softmax over empty axis");
  const std::size_t rows = x.size() / n;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) o[i] /= z;
  }
  const auto xi = x.id();
  Tape& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(Op::softmax_lastdim, x.shape(), std::move(out), {x},
                     [xi, self, n, rows](Tape& t, std::span<const double> g) {
                       double* gx = t.grad_target(xi);
                       if (!gx) return;
                       const auto& y = t.value(self);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* yr = y.data() + r * n;
                         const double* gr = g.data() + r * n;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
                         for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += yr[i] * (gr[i] - dot);
                       }
                     });
}

Var transpose(Var x) {
  NPF_REQUIRE(x.shape().size() == 2, "transpose: rank-2 input required");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  Map(out.data(), c, r) = MapC(x.values().data(), r, c).transpose();
  const auto xi = x.id();
  return x.tape().record(Op::transpose, {c, r}, std::move(out), {x},
                         [xi, r, c](Tape& t, std::span<const double> g) {
                           if (double* gx = t.grad_target(xi))
                             Map(gx, r, c) += MapC(g.data(), c, r).transpose();
                         });
}

Var reshape(Var x, Shape shape) {
  NPF_REQUIRE(numel(shape) == x.size(),
              "reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  auto xv = x.values();
  std::vector<double> out(xv.begin(), xv.end());
  const auto xi = x.id();
  return x.tape().record(Op::reshape, std::move(shape), std::move(out), {x},
                         [xi](Tape& t, std::span<const double> g) {
                           if (double* gx = t.grad_target(xi))
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
}

// ---------------------------------------------------------------- factorizations

Var cholesky(Var a, double jitter) {
  NPF_REQUIRE(a.shape().size() == 2 && a.shape()[0] == a.shape()[1],
              "cholesky: square matrix required, got " + to_string(a.shape()));
  const std::size_t n = a.shape()[0];
  MapC A(a.values().data(), n, n);
  RowMat S = 0.5 * (A + A.transpose());
  S.diagonal().array() += jitter;
  Eigen::LLT<RowMat> llt(S);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError("cholesky: matrix not positive definite (jitter " +
                              std::to_string(jitter) + ")");
  std::vector<double> out(n * n);
  Map(out.data(), n, n) = llt.matrixL();
  const auto ai = a.id();
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(Op::cholesky, {n, n}, std::move(out), {a},
                     [ai, self, n](Tape& t, std::span<const double> g) {
                       double* ga = t.grad_target(ai);
                       if (!ga) return;
                       MapC L(t.value(self).data(), n, n);
                       MapC Lbar(g.data(), n, n);
                       // Abar = L^{-T} Phi(L^T Lbar) L^{-1}, Phi = tril with halved diagonal.
                       RowMat P = (L.transpose() * Lbar).triangularView<Eigen::Lower>();
                       P.diagonal() *= 0.5;
                       auto Lt = L.transpose().triangularView<Eigen::Upper>();
                       RowMat Y = Lt.solve(P);
                       RowMat Z = Lt.solve(Y.transpose());  // (Y L^{-1})^T
                       Map G(ga, n, n);
                       G += 0.5 * (Z + Z.transpose());
                     });
}

Var solve_lower(Var l, Var b) {
  require_same_tape(l, b);
  NPF_REQUIRE(l.shape().size() == 2 && l.shape()[0] == l.shape()[1],
              "solve_lower: square factor required");
  const std::size_t n = l.shape()[0];
  NPF_REQUIRE((b.shape().size() == 2 || b.shape().size() == 1) && b.shape()[0] == n,
              "solve_lower: rhs " + to_string(b.shape()) + " incompatible with factor " +
                  to_string(l.shape()));
  const std::size_t m = b.shape().size() == 2 ? b.shape()[1] : 1;
  MapC L(l.values().data(), n, n);
  std::vector<double> out(n * m);
  Map X(out.data(), n, m);
  X = MapC(b.values().data(), n, m);
  L.triangularView<Eigen::Lower>().solveInPlace(X);
  const auto li = l.id(), bi = b.id();
  Tape& tape = l.tape();
  const std::size_t self = tape.size();
  return tape.record(Op::solve_lower, b.shape(), std::move(out), {l, b},
                     [li, bi, self, n, m](Tape& t, std::span<const double> g) {
                       MapC L(t.value(li).data(), n, n);
                       RowMat Bbar = MapC(g.data(), n, m);
                       L.transpose().triangularView<Eigen::Upper>().solveInPlace(Bbar);
                       if (double* gb = t.grad_target(bi)) Map(gb, n, m) += Bbar;
                       if (double* gl = t.grad_target(li)) {
                         MapC X(t.value(self).data(), n, m);
                         RowMat Lbar = -(Bbar * X.transpose());
                         Map(gl, n, n) += Lbar.triangularView<Eigen::Lower>().toDenseMatrix();
                       }
                     });
}

// ---------------------------------------------------------------- checking

double grad_check(const ScalarFunction& f, const Shape& shape, const std::vector<double>& point,
                  double epsilon) {
  NPF_REQUIRE(epsilon > 0.0 && epsilon <= 1e-2, "grad_check: epsilon must lie in (0, 1e-2]");
  NPF_REQUIRE(numel(shape) == point.size(), "grad_check: point does not match shape");
  Tape tape;
  Var x = tape.variable(shape, point);
  Var y = f(tape, x);
  tape.backward(y);
  std::vector<double> analytic(point.size(), 0.0);
  if (tape.has_grad(x)) {
    auto g = tape.grad(x);
    analytic.assign(g.begin(), g.end());
  }
  auto eval = [&](const std::vector<double>& p) {
    Tape probe(false);
    return f(probe, probe.constant(shape, p)).item();
  };
  double worst = 0.0;
  std::vector<double> p = point;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + epsilon;
    const double up = eval(p);
    p[i] = orig - epsilon;
    const double down = eval(p);
    p[i] = orig;
    const double fd = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace npf::ad
