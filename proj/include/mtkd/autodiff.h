// Copyright 2026 The mtkd Authors
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

// Reverse-mode automatic differentiation over mtkd::Tensor.
//
// A Tape owns every value produced during one forward pass. Nodes are appended
// in creation order, so the node list is already topologically sorted and
// backward() is a single reverse sweep that visits each node once. Gradients
// accumulate additively, which handles fan-out.
//
// Persistent weights live in Parameter objects outside the tape. Binding one
// with Tape::param() creates a leaf that references the parameter's value
// without copying it; after backward(), accumulate_parameter_grads() adds the
// leaf gradients into Parameter::grad. Independent tapes may be built and
// differentiated concurrently as long as the accumulation step is serialized.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtkd/tensor.h"

namespace mtkd {

struct Parameter {
  std::string name;
  std::string group;
  Tensor value;
  std::vector<double> grad;
  // Adam first and second moments.
  std::vector<double> m;
  std::vector<double> v;

  Parameter() = default;
  Parameter(std::string name, std::string group, Tensor value);

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node's output gradient and value; adds input gradients via
  // grad_buffer().
  using BackwardFn =
      std::function<void(Tape&, std::span<const double> grad_out, const Tensor& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to a persistent parameter. A non-trainable binding behaves as a
  // constant and never receives a gradient.
  Var param(Parameter& p, bool trainable = true);
  Var param(const Parameter& p);

  // Appends an op result. `backward` is dropped when no input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = seed and sweeps the tape once in reverse.
  void backward(Var loss, double seed = 1.0);

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  // Gradient storage of a requires-grad node (zero-initialized on first use).
  std::span<double> grad_buffer(Var v);
  // Accumulated gradient; empty when the node never received one.
  const std::vector<double>& grad(Var v) const { return node(v).grad; }

  // Adds scale * (leaf gradient) into Parameter::grad for every trainable
  // parameter binding, in binding order.
  void accumulate_parameter_grads(double scale = 1.0) const;

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);

  std::deque<Node> nodes_;
};

// Binds parameters onto a tape, deciding per parameter whether the binding is
// trainable. Model forward functions take a Binder so freeze policies stay out
// of the model code.
class Binder {
 public:
  using Predicate = std::function<bool(const Parameter&)>;

  // A null predicate makes every parameter trainable.
  explicit Binder(Tape& tape, Predicate trainable = nullptr)
      : tape_(&tape), trainable_(std::move(trainable)) {}
  static Binder inference(Tape& tape) {
    return Binder(tape, [](const Parameter&) { return false; });
  }

  Var operator()(Parameter& p) const { return tape_->param(p, !trainable_ || trainable_(p)); }
  Tape& tape() const { return *tape_; }
  Var constant(Tensor t) const { return tape_->constant(std::move(t)); }

 private:
  Tape* tape_;
  Predicate trainable_;
};

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops accept equal shapes, or one operand with a
// single element (scalar broadcast). No other broadcasting is performed.

enum class ElementwiseOp {
  kAdd, kSub, kMul, kDiv,
  kSigmoid, kLog, kExp, kRelu, kTanh, kAbs, kSqrt, kSquare, kNeg,
};

Var elementwise(ElementwiseOp op, Var a);
Var elementwise(ElementwiseOp op, Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var relu(Var a);
Var tanh(Var a);
Var abs(Var a);
Var sqrt(Var a);
Var square(Var a);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

// ---------------------------------------------------------------------------
// Reductions. Without an axis the result is a rank-0 scalar. max() routes the
// gradient to the first (lowest flat index) maximal element.

enum class ReduceOp { kSum, kMean, kMax };

Var reduce(ReduceOp op, Var a, std::optional<std::size_t> axis = std::nullopt);
Var sum(Var a, std::optional<std::size_t> axis = std::nullopt);
Var mean(Var a, std::optional<std::size_t> axis = std::nullopt);
Var max(Var a, std::optional<std::size_t> axis = std::nullopt);

// ---------------------------------------------------------------------------
// Linear algebra and structural ops.

Var matmul(Var a, Var b);             // [M x K] * [K x N]
Var transpose(Var a);                 // 2-D
Var reshape(Var a, Shape shape);
Var add_rowwise(Var x, Var bias);     // [T x D] + [D] on every row
Var linear(Var x, Var weight, Var bias);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var concat(const std::vector<Var>& vectors);  // 1-D vectors end to end
Var pad_rows(Var a, std::size_t before, std::size_t after);
// [T x H], [U x H] -> [(T*U) x H], row t*U + u = a_t + b_u.
Var pairwise_add(Var a, Var b);
// Rows of table [V x D] selected by ids -> [n x D].
Var embedding(Var table, const std::vector<std::size_t>& ids);
// Single element as a scalar.
Var pick(Var a, std::size_t flat_index);

Var softmax(Var a, std::size_t axis);
Var log_softmax(Var a, std::size_t axis);

// Per-row normalization of a [T x D] tensor.
inline constexpr double kLayerNormEps = 1e-5;
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);

// Valid 1-D convolution: [T x Din] * [W x Din x Dout] -> [T' x Dout].
Var conv1d(Var x, Var kernel, std::size_t stride);

}  // namespace mtkd
