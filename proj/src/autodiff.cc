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

#include "mtkd/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtkd/error.h"
#include "mtkd/kernels.h"

namespace mtkd {

Parameter::Parameter(std::string name, std::string group, Tensor value)
    : name(std::move(name)),
      group(std::move(group)),
      value(std::move(value)),
      grad(this->value.size(), 0.0),
      m(this->value.size(), 0.0),
      v(this->value.size(), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

// ---------------------------------------------------------------------------
// Tape

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractError("Var from another tape");
  return nodes_[v.id_];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractError("Var from another tape");
  return nodes_[v.id_];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.owned;
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p, bool trainable) {
  Node n;
  n.external = &p.value;
  if (trainable) {
    n.requires_grad = true;
    n.param = &p;
  }
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.external = &p.value;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    if (node(in).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

std::span<double> Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return {};
  if (n.grad.empty()) {
    const std::size_t size = n.external ? n.external->size() : n.owned.size();
    n.grad.assign(size, 0.0);
  }
  return n.grad;
}

void Tape::backward(Var loss, double seed) {
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(lv.shape()));
  }
  if (!requires_grad(loss)) return;
  grad_buffer(loss)[0] += seed;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    const Tensor& out = n.external ? *n.external : n.owned;
    n.backward(*this, n.grad, out);
  }
}

void Tape::accumulate_parameter_grads(double scale) const {
  for (const Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    std::vector<double>& dst = n.param->grad;
    if (dst.size() != n.grad.size()) dst.assign(n.grad.size(), 0.0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * n.grad[i];
  }
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

Tape& tape_of(Var a) {
  if (!a.tape()) throw ContractError("use of an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || !a.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

const char* op_name(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::kAdd: return "add";
    case ElementwiseOp::kSub: return "sub";
    case ElementwiseOp::kMul: return "mul";
    case ElementwiseOp::kDiv: return "div";
    case ElementwiseOp::kSigmoid: return "sigmoid";
    case ElementwiseOp::kLog: return "log";
    case ElementwiseOp::kExp: return "exp";
    case ElementwiseOp::kRelu: return "relu";
    case ElementwiseOp::kTanh: return "tanh";
    case ElementwiseOp::kAbs: return "abs";
    case ElementwiseOp::kSqrt: return "sqrt";
    case ElementwiseOp::kSquare: return "square";
    case ElementwiseOp::kNeg: return "neg";
  }
  return "?";
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Var elementwise(ElementwiseOp op, Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    double r = 0.0;
    switch (op) {
      case ElementwiseOp::kSigmoid: r = stable_sigmoid(v); break;
      case ElementwiseOp::kLog:
        if (!(v > 0.0)) {
          throw NumericError("log of non-positive value " + std::to_string(v) + " at index " +
                             std::to_string(i));
        }
        r = std::log(v);
        break;
      case ElementwiseOp::kExp:
        r = std::exp(v);
        if (!std::isfinite(r)) {
          throw NumericError("exp overflow for input " + std::to_string(v) + " at index " +
                             std::to_string(i));
        }
        break;
      case ElementwiseOp::kRelu: r = v > 0.0 ? v : 0.0; break;
      case ElementwiseOp::kTanh: r = std::tanh(v); break;
      case ElementwiseOp::kAbs: r = std::fabs(v); break;
      case ElementwiseOp::kSqrt:
        if (v < 0.0) {
          throw NumericError("sqrt of negative value " + std::to_string(v) + " at index " +
                             std::to_string(i));
        }
        r = std::sqrt(v);
        break;
      case ElementwiseOp::kSquare: r = v * v; break;
      case ElementwiseOp::kNeg: r = -v; break;
      default:
        throw ContractError(std::string("elementwise: ") + op_name(op) + " is a binary op");
    }
    y[i] = r;
  }
  return tape.record(std::move(y), {a}, [a, op](Tape& t, std::span<const double> g, const Tensor& y) {
    std::span<double> ga = t.grad_buffer(a);
    const Tensor& x = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (op) {
        case ElementwiseOp::kSigmoid: d = y[i] * (1.0 - y[i]); break;
        case ElementwiseOp::kLog: d = 1.0 / x[i]; break;
        case ElementwiseOp::kExp: d = y[i]; break;
        case ElementwiseOp::kRelu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
        case ElementwiseOp::kTanh: d = 1.0 - y[i] * y[i]; break;
        case ElementwiseOp::kAbs: d = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0); break;
        case ElementwiseOp::kSqrt: d = y[i] > 0.0 ? 0.5 / y[i] : 0.0; break;
        case ElementwiseOp::kSquare: d = 2.0 * x[i]; break;
        case ElementwiseOp::kNeg: d = -1.0; break;
        default: break;
      }
      ga[i] += g[i] * d;
    }
  });
}

Var elementwise(ElementwiseOp op, Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const bool same = x.shape() == z.shape();
  const bool a_scalar = !same && x.size() == 1;
  const bool b_scalar = !same && z.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(x.shape()) +
                     " vs " + shape_str(z.shape()));
  }
  const Shape& out_shape = a_scalar ? z.shape() : x.shape();
  Tensor y(out_shape);
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x[a_scalar ? 0 : i];
    const double v = z[b_scalar ? 0 : i];
    switch (op) {
      case ElementwiseOp::kAdd: y[i] = u + v; break;
      case ElementwiseOp::kSub: y[i] = u - v; break;
      case ElementwiseOp::kMul: y[i] = u * v; break;
      case ElementwiseOp::kDiv:
        if (v == 0.0) throw NumericError("division by zero at index " + std::to_string(i));
        y[i] = u / v;
        break;
      default:
        throw ContractError(std::string("elementwise: ") + op_name(op) + " is a unary op");
    }
  }
  return tape.record(std::move(y), {a, b},
                     [a, b, op, a_scalar, b_scalar](Tape& t, std::span<const double> g,
                                                    const Tensor&) {
                       const Tensor& x = t.value(a);
                       const Tensor& z = t.value(b);
                       std::span<double> ga = t.grad_buffer(a);
                       std::span<double> gb = t.grad_buffer(b);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const std::size_t ia = a_scalar ? 0 : i;
                         const std::size_t ib = b_scalar ? 0 : i;
                         double da = 0.0, db = 0.0;
                         switch (op) {
                           case ElementwiseOp::kAdd: da = 1.0; db = 1.0; break;
                           case ElementwiseOp::kSub: da = 1.0; db = -1.0; break;
                           case ElementwiseOp::kMul: da = z[ib]; db = x[ia]; break;
                           case ElementwiseOp::kDiv:
                             da = 1.0 / z[ib];
                             db = -x[ia] / (z[ib] * z[ib]);
                             break;
                           default: break;
                         }
                         if (!ga.empty()) ga[ia] += g[i] * da;
                         if (!gb.empty()) gb[ib] += g[i] * db;
                       }
                     });
}

Var add(Var a, Var b) { return elementwise(ElementwiseOp::kAdd, a, b); }
Var sub(Var a, Var b) { return elementwise(ElementwiseOp::kSub, a, b); }
Var mul(Var a, Var b) { return elementwise(ElementwiseOp::kMul, a, b); }
Var div(Var a, Var b) { return elementwise(ElementwiseOp::kDiv, a, b); }
Var sigmoid(Var a) { return elementwise(ElementwiseOp::kSigmoid, a); }
Var log(Var a) { return elementwise(ElementwiseOp::kLog, a); }
Var exp(Var a) { return elementwise(ElementwiseOp::kExp, a); }
Var relu(Var a) { return elementwise(ElementwiseOp::kRelu, a); }
Var tanh(Var a) { return elementwise(ElementwiseOp::kTanh, a); }
Var abs(Var a) { return elementwise(ElementwiseOp::kAbs, a); }
Var sqrt(Var a) { return elementwise(ElementwiseOp::kSqrt, a); }
Var square(Var a) { return elementwise(ElementwiseOp::kSquare, a); }
Var neg(Var a) { return elementwise(ElementwiseOp::kNeg, a); }

Var scale(Var a, double c) {
  Tape& tape = tape_of(a);
  Tensor y = a.value();
  for (double& v : y.vec()) v *= c;
  return tape.record(std::move(y), {a}, [a, c](Tape& t, std::span<const double> g, const Tensor&) {
    std::span<double> ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_scalar(Var a, double c) {
  Tape& tape = tape_of(a);
  Tensor y = a.value();
  for (double& v : y.vec()) v += c;
  return tape.record(std::move(y), {a}, [a](Tape& t, std::span<const double> g, const Tensor&) {
    add_into(t.grad_buffer(a), g);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var reduce(ReduceOp op, Var a, std::optional<std::size_t> axis) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("reduce over an empty tensor");
  Shape out_shape;
  AxisSplit s{1, x.size(), 1};
  if (axis) {
    if (*axis >= x.rank()) {
      throw ShapeError("reduce: axis " + std::to_string(*axis) + " out of range for shape " +
                       shape_str(x.shape()));
    }
    s = split_axis(x.shape(), *axis);
    out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
  }
  Tensor y(out_shape);
  // argmax positions for max, as flat input indices
  std::vector<std::size_t> arg(op == ReduceOp::kMax ? y.size() : 0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t out = o * s.inner + i;
      const std::size_t base = o * s.len * s.inner + i;
      if (op == ReduceOp::kMax) {
        std::size_t best = base;
        for (std::size_t k = 1; k < s.len; ++k) {
          const std::size_t idx = base + k * s.inner;
          if (x[idx] > x[best]) best = idx;
        }
        arg[out] = best;
        y[out] = x[best];
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) acc += x[base + k * s.inner];
        y[out] = op == ReduceOp::kMean ? acc / static_cast<double>(s.len) : acc;
      }
    }
  }
  return tape.record(std::move(y), {a},
                     [a, op, s, arg = std::move(arg)](Tape& t, std::span<const double> g,
                                                      const Tensor&) {
                       std::span<double> ga = t.grad_buffer(a);
                       if (op == ReduceOp::kMax) {
                         for (std::size_t out = 0; out < g.size(); ++out) ga[arg[out]] += g[out];
                         return;
                       }
                       const double f = op == ReduceOp::kMean ? 1.0 / static_cast<double>(s.len) : 1.0;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const double gv = f * g[o * s.inner + i];
                           const std::size_t base = o * s.len * s.inner + i;
                           for (std::size_t k = 0; k < s.len; ++k) ga[base + k * s.inner] += gv;
                         }
                       }
                     });
}

Var sum(Var a, std::optional<std::size_t> axis) { return reduce(ReduceOp::kSum, a, axis); }
Var mean(Var a, std::optional<std::size_t> axis) { return reduce(ReduceOp::kMean, a, axis); }
Var max(Var a, std::optional<std::size_t> axis) { return reduce(ReduceOp::kMax, a, axis); }

// ---------------------------------------------------------------------------
// Linear algebra and structure

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  Tensor y({m, n});
  kernels::gemm({.a = x.data(), .b = w.data(), .c = y.data(), .m = m, .k = k, .n = n});
  return tape.record(std::move(y), {a, b},
                     [a, b, m, k, n](Tape& t, std::span<const double> g, const Tensor&) {
                       if (t.requires_grad(a)) {
                         // dA = dY * B^T
                         kernels::gemm({.a = g, .b = t.value(b).data(), .c = t.grad_buffer(a),
                                        .m = m, .k = n, .n = k, .trans_b = true,
                                        .accumulate = true});
                       }
                       if (t.requires_grad(b)) {
                         // dB = A^T * dY
                         kernels::gemm({.a = t.value(a).data(), .b = g, .c = t.grad_buffer(b),
                                        .m = k, .k = m, .n = n, .trans_a = true,
                                        .accumulate = true});
                       }
                     });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  return tape.record(std::move(y), {a}, [a, r, c](Tape& t, std::span<const double> g, const Tensor&) {
    std::span<double> ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a);
  Tensor y = a.value().reshaped(std::move(shape));
  return tape.record(std::move(y), {a}, [a](Tape& t, std::span<const double> g, const Tensor&) {
    add_into(t.grad_buffer(a), g);
  });
}

Var add_rowwise(Var x, Var bias) {
  Tape& tape = tape_of(x, bias);
  const Tensor& v = x.value();
  const Tensor& b = bias.value();
  require_rank(v, 2, "add_rowwise");
  if (b.rank() != 1 || b.dim(0) != v.dim(1)) {
    throw ShapeError("add_rowwise: bias " + shape_str(b.shape()) + " does not match rows of " +
                     shape_str(v.shape()));
  }
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  Tensor y = v;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += b[c];
  return tape.record(std::move(y), {x, bias},
                     [x, bias, rows, cols](Tape& t, std::span<const double> g, const Tensor&) {
                       if (t.requires_grad(x)) add_into(t.grad_buffer(x), g);
                       if (t.requires_grad(bias)) {
                         std::span<double> gb = t.grad_buffer(bias);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                       }
                     });
}

Var linear(Var x, Var weight, Var bias) { return add_rowwise(matmul(x, weight), bias); }

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  require_rank(x, 2, "slice_rows");
  if (begin + count > x.dim(0)) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  std::vector<double> data(x.vec().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           x.vec().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  Tensor y({count, cols}, std::move(data));
  return tape.record(std::move(y), {a},
                     [a, begin, cols](Tape& t, std::span<const double> g, const Tensor&) {
                       std::span<double> ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
                     });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  require_rank(x, 2, "slice_cols");
  if (begin + count > x.dim(1)) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) y[r * count + c] = x[r * cols + begin + c];
  return tape.record(std::move(y), {a},
                     [a, begin, count, rows, cols](Tape& t, std::span<const double> g,
                                                   const Tensor&) {
                       std::span<double> ga = t.grad_buffer(a);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < count; ++c)
                           ga[r * cols + begin + c] += g[r * count + c];
                     });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& tape = tape_of(parts.front());
  const std::size_t rows = parts.front().value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_rank(v, 2, "concat_cols");
    if (p.tape() != &tape) throw ContractError("operands live on different tapes");
    if (v.dim(0) != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(v.shape()));
    }
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor y({rows, total});
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[p]; ++c) y[r * total + off + c] = v[r * widths[p] + c];
    off += widths[p];
  }
  return tape.record(std::move(y), parts,
                     [parts, widths, rows, total](Tape& t, std::span<const double> g,
                                                  const Tensor&) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < parts.size(); ++p) {
                         if (t.requires_grad(parts[p])) {
                           std::span<double> gp = t.grad_buffer(parts[p]);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[p]; ++c)
                               gp[r * widths[p] + c] += g[r * total + off + c];
                         }
                         off += widths[p];
                       }
                     });
}

Var concat(const std::vector<Var>& vectors) {
  std::vector<Var> rows;
  rows.reserve(vectors.size());
  for (const Var& v : vectors) {
    require_rank(v.value(), 1, "concat");
    rows.push_back(reshape(v, {1, v.dim(0)}));
  }
  Var joined = concat_cols(rows);
  return reshape(joined, {joined.dim(1)});
}

Var pad_rows(Var a, std::size_t before, std::size_t after) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  require_rank(x, 2, "pad_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y({rows + before + after, cols});
  std::copy(x.vec().begin(), x.vec().end(), y.vec().begin() + static_cast<std::ptrdiff_t>(before * cols));
  return tape.record(std::move(y), {a},
                     [a, before, cols](Tape& t, std::span<const double> g, const Tensor&) {
                       std::span<double> ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[before * cols + i];
                     });
}

Var pairwise_add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  require_rank(x, 2, "pairwise_add");
  require_rank(z, 2, "pairwise_add");
  if (x.dim(1) != z.dim(1)) {
    throw ShapeError("pairwise_add: width mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(z.shape()));
  }
  const std::size_t tn = x.dim(0), un = z.dim(0), h = x.dim(1);
  Tensor y({tn * un, h});
  for (std::size_t t = 0; t < tn; ++t)
    for (std::size_t u = 0; u < un; ++u)
      for (std::size_t c = 0; c < h; ++c) y[(t * un + u) * h + c] = x[t * h + c] + z[u * h + c];
  return tape.record(std::move(y), {a, b},
                     [a, b, tn, un, h](Tape& t, std::span<const double> g, const Tensor&) {
                       std::span<double> ga = t.grad_buffer(a);
                       std::span<double> gb = t.grad_buffer(b);
                       for (std::size_t ti = 0; ti < tn; ++ti)
                         for (std::size_t u = 0; u < un; ++u)
                           for (std::size_t c = 0; c < h; ++c) {
                             const double gv = g[(ti * un + u) * h + c];
                             if (!ga.empty()) ga[ti * h + c] += gv;
                             if (!gb.empty()) gb[u * h + c] += gv;
                           }
                     });
}

Var embedding(Var table, const std::vector<std::size_t>& ids) {
  Tape& tape = tape_of(table);
  const Tensor& w = table.value();
  require_rank(w, 2, "embedding");
  const std::size_t rows = w.dim(0), d = w.dim(1);
  Tensor y({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range for table " +
                       shape_str(w.shape()));
    }
    for (std::size_t c = 0; c < d; ++c) y[i * d + c] = w[ids[i] * d + c];
  }
  return tape.record(std::move(y), {table},
                     [table, ids, d](Tape& t, std::span<const double> g, const Tensor&) {
                       std::span<double> gw = t.grad_buffer(table);
                       for (std::size_t i = 0; i < ids.size(); ++i)
                         for (std::size_t c = 0; c < d; ++c) gw[ids[i] * d + c] += g[i * d + c];
                     });
}

Var pick(Var a, std::size_t flat_index) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (flat_index >= x.size()) {
    throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " +
                     shape_str(x.shape()));
  }
  return tape.record(Tensor::scalar(x[flat_index]), {a},
                     [a, flat_index](Tape& t, std::span<const double> g, const Tensor&) {
                       t.grad_buffer(a)[flat_index] += g[0];
                     });
}

namespace {

Var softmax_impl(Var a, std::size_t axis, bool log_domain) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) mx = std::max(mx, x[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) z += std::exp(x[base + k * s.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t k = 0; k < s.len; ++k) {
        const double lp = x[base + k * s.inner] - lz;
        y[base + k * s.inner] = log_domain ? lp : std::exp(lp);
      }
    }
  }
  return tape.record(std::move(y), {a},
                     [a, s, log_domain](Tape& t, std::span<const double> g, const Tensor& y) {
                       std::span<double> ga = t.grad_buffer(a);
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t base = o * s.len * s.inner + i;
                           double acc = 0.0;
                           for (std::size_t k = 0; k < s.len; ++k) {
                             const std::size_t idx = base + k * s.inner;
                             acc += log_domain ? g[idx] : g[idx] * y[idx];
                           }
                           for (std::size_t k = 0; k < s.len; ++k) {
                             const std::size_t idx = base + k * s.inner;
                             if (log_domain) {
                               ga[idx] += g[idx] - std::exp(y[idx]) * acc;
                             } else {
                               ga[idx] += y[idx] * (g[idx] - acc);
                             }
                           }
                         }
                       }
                     });
}

}  // namespace

Var softmax(Var a, std::size_t axis) { return softmax_impl(a, axis, false); }
Var log_softmax(Var a, std::size_t axis) { return softmax_impl(a, axis, true); }

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = tape_of(x, gain);
  if (bias.tape() != &tape) throw ContractError("operands live on different tapes");
  const Tensor& v = x.value();
  require_rank(v, 2, "layer_norm");
  const std::size_t rows = v.dim(0), d = v.dim(1);
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match " + shape_str(v.shape()));
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor y({rows, d});
  Tensor xhat({rows, d});
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mu) * inv_std[r];
      xhat[r * d + c] = h;
      y[r * d + c] = h * gv[c] + bv[c];
    }
  }
  return tape.record(
      std::move(y), {x, gain, bias},
      [x, gain, bias, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::span<const double> g, const Tensor&) {
        const Tensor& gv = t.value(gain);
        if (t.requires_grad(gain)) {
          std::span<double> gg = t.grad_buffer(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * xhat[r * d + c];
        }
        if (t.requires_grad(bias)) {
          std::span<double> gb = t.grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
        }
        if (t.requires_grad(x)) {
          std::span<double> gx = t.grad_buffer(x);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dh = g[r * d + c] * gv[c];
              m1 += dh;
              m2 += dh * xhat[r * d + c];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const double dh = g[r * d + c] * gv[c];
              gx[r * d + c] += inv_std[r] * (dh - m1 - xhat[r * d + c] * m2);
            }
          }
        }
      });
}

Var conv1d(Var x, Var kernel, std::size_t stride) {
  Tape& tape = tape_of(x, kernel);
  const Tensor& v = x.value();
  const Tensor& k = kernel.value();
  require_rank(v, 2, "conv1d");
  require_rank(k, 3, "conv1d kernel");
  if (stride == 0) throw ContractError("conv1d: stride must be >= 1");
  if (k.dim(1) != v.dim(1)) {
    throw ShapeError("conv1d: input " + shape_str(v.shape()) + " does not match kernel " +
                     shape_str(k.shape()));
  }
  kernels::ConvArgs s{.t_in = v.dim(0), .d_in = v.dim(1), .d_out = k.dim(2), .width = k.dim(0),
                      .stride = stride};
  if (s.t_in < s.width) {
    throw ShapeError("conv1d: sequence too short (" + std::to_string(s.t_in) +
                     " frames) for kernel width " + std::to_string(s.width));
  }
  Tensor y({s.t_out(), s.d_out});
  kernels::conv1d_forward(s, v.data(), k.data(), y.data());
  return tape.record(std::move(y), {x, kernel},
                     [x, kernel, s](Tape& t, std::span<const double> g, const Tensor&) {
                       if (t.requires_grad(x)) {
                         kernels::conv1d_backward_input(s, g, t.value(kernel).data(),
                                                        t.grad_buffer(x));
                       }
                       if (t.requires_grad(kernel)) {
                         kernels::conv1d_backward_kernel(s, t.value(x).data(), g,
                                                         t.grad_buffer(kernel));
                       }
                     });
}

}  // namespace mtkd
