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

// Define-by-run reverse-mode differentiation over dense row-major float64
// arrays. A Tape records every primitive applied during one forward pass;
// Tape::backward walks it in reverse and accumulates gradients into the
// requires-grad leaves (and into bound Parameters).
//
// A tape can be consumed once: calling backward a second time throws
// ContractViolation. Record a fresh tape per forward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "npf/errors.hpp"

namespace npf::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Learnable array owned by a model. Tapes copy `value` when the parameter is
/// bound and add into `grad` after backward.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter(std::string name, Shape shape, std::vector<double> value);
  void zero_grad();
  std::size_t size() const { return value.size(); }
};

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  matmul,
  conv1d_same,
  relu,
  softplus,
  exp,
  log,
  sqrt,
  square,
  mean,
  sum,
  concat,
  slice,
  broadcast,
  softmax_lastdim,
  // Auxiliary primitives used by the attention and GP paths.
  transpose,
  reshape,
  scale,
  shift,
  clamp_min,
  cholesky,
  solve_lower,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  std::span<const double> values() const;
  std::size_t size() const;
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  /// With grad_enabled false nothing is kept for the backward pass and every
  /// node behaves like a constant.
  explicit Tape(bool grad_enabled = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Shape shape, std::vector<double> values);
  Var scalar(double v) { return constant({}, {v}); }
  Var variable(Shape shape, std::vector<double> values);
  Var parameter(Parameter& p);

  /// Populates gradients for every requires-grad ancestor of `loss`.
  void backward(Var loss);

  bool has_grad(Var v) const;
  std::span<const double> grad(Var v) const;

  bool grad_enabled() const { return grad_enabled_; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_[v.id()].op; }

  // Primitive authoring interface.
  Var record(Op op, Shape shape, std::vector<double> value, std::initializer_list<Var> parents,
             BackwardFn backward);
  Var record(Op op, Shape shape, std::vector<double> value, const std::vector<Var>& parents,
             BackwardFn backward);
  const std::vector<double>& value(std::size_t id) const { return nodes_[id].value; }
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator for node `id`, or nullptr when it takes no gradient.
  double* grad_target(std::size_t id);

 private:
  struct Node {
    Op op = Op::leaf;
    Shape shape;
    std::vector<double> value;
    std::vector<std::size_t> parents;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool grad_enabled_;
  bool consumed_ = false;
};

// Elementwise binary ops require identical shapes; use broadcast() first.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

/// (m x k) . (k x n) -> (m x n).
Var matmul(Var a, Var b);

/// Cross-correlation, stride 1, zero "same" padding. x: (c_in x L),
/// w: (c_out x c_in x k) with odd k. Returns (c_out x L).
Var conv1d_same(Var x, Var w);

Var relu(Var x);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var square(Var x);

/// Full reductions return a rank-0 scalar.
Var sum(Var x);
Var mean(Var x);
/// Reduce one axis, removing it from the shape.
Var sum(Var x, std::size_t axis);
Var mean(Var x, std::size_t axis);

Var concat(const std::vector<Var>& xs, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
/// Numpy-style broadcast to `shape` (leading axes added, size-1 axes expanded).
Var broadcast(Var x, const Shape& shape);
Var softmax_lastdim(Var x);

/// Rank-2 transpose.
Var transpose(Var x);
Var reshape(Var x, Shape shape);
Var scale(Var x, double c);
Var shift(Var x, double c);
Var clamp_min(Var x, double floor);
/// Lower Cholesky factor of 0.5 (A + A^T) + jitter I. Throws
/// SingularMatrixError when that matrix is not positive definite.
Var cholesky(Var a, double jitter = 0.0);
/// L^{-1} B for lower-triangular L (n x n); B is (n x m) or (n).
Var solve_lower(Var l, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

/// Scalar function of one array, recorded onto the supplied tape.
using ScalarFunction = std::function<Var(Tape&, Var)>;

/// max_i |analytic_i - fd_i| / max(1, |fd_i|) with fd the central difference.
double grad_check(const ScalarFunction& f, const Shape& shape, const std::vector<double>& point,
                  double epsilon);

}  // namespace npf::ad
