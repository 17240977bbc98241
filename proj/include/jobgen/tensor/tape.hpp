#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "jobgen/tensor/tensor.hpp"

namespace jobgen::tensor {

// Primitive catalogue. Every kind has a forward kernel and an analytic
// vector-Jacobian product.
enum class OpKind {
  leaf,
  matmul,            // [M,K] x [K,N]
  add,               // a + b; b may be a scalar or broadcast over rows
  subtract,          // a - b; same broadcasting as add
  multiply,          // elementwise a * b; same broadcasting as add
  scale,             // a * attrs.scalar
  concat_last,       // concatenate along the last axis
  gather_rows,       // table[attrs.indices[i], :]  (embedding lookup)
  softmax_last,
  log_softmax_last,
  layer_norm,        // normalize the last axis, eps = attrs.scalar
  relu,
  gelu,              // tanh approximation
  sigmoid,
  log_sigmoid,
  log,
  exp,
  mean,              // mean of all elements -> scalar
  sum,               // sum of all elements -> scalar
  mean_rows,         // [R,C] -> [1,C]
  causal_mask_fill,  // [R,C]: entries with col > row + (C - R) set to a large negative
  transpose,         // 2-D transpose
  slice_last,        // columns [attrs.offset, attrs.offset + attrs.width)
  pick,              // [R,C] -> [R]; element attrs.indices[r] of each row
  clip,              // clamp to [attrs.scalar, attrs.scalar2]
  minimum,           // elementwise min of equally shaped inputs
  square,
};

std::string_view op_name(OpKind kind) noexcept;

struct OpAttrs {
  double scalar = 0.0;
  double scalar2 = 0.0;
  std::size_t offset = 0;
  std::size_t width = 0;
  std::vector<std::size_t> indices;
};

using NodeId = std::size_t;

// Parameter gradients produced by one backward pass, keyed by parameter.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const;
  Tensor& slot(const Parameter& p);
  void accumulate(const Gradients& other);
  void scale(double alpha);
  bool empty() const noexcept { return grads_.empty(); }
  std::size_t size() const noexcept { return grads_.size(); }
  double squared_norm() const;
  const std::unordered_map<const Parameter*, Tensor>& entries() const noexcept { return grads_; }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

// Reverse-mode tape. Nodes are appended in execution order, so every input id
// precedes the node that consumes it. A tape belongs to one thread.
class Tape {
 public:
  NodeId constant(Tensor value);
  NodeId variable(Tensor value);
  // Leaf bound to a model parameter. Repeated calls return the same node.
  NodeId parameter(const Parameter& p);

  // Computes the forward value immediately; backward information is kept
  // only when some input requires gradients.
  NodeId apply(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs = {});

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Root must hold a single value. Each recorded node is visited once in
  // reverse order; repeated calls yield identical results.
  Gradients backward(NodeId root);
  // Gradient of the last backward root with respect to any node.
  const Tensor& gradient(NodeId id) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
    Tensor saved;  // op-specific forward state (layer norm statistics, ...)
    bool needs_grad = false;
    const Parameter* param = nullptr;
  };

  NodeId push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
  std::vector<Tensor> grads_;
};

// Handle pairing a tape with a node, so model code reads as expressions.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const { return tape->value(id); }
};

Var constant(Tape& tape, Tensor value);
Var variable(Tape& tape, Tensor value);
Var parameter(Tape& tape, const Parameter& p);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
Var scale(Var a, double alpha);
Var concat_last(std::span<const Var> parts);
Var gather_rows(Var table, std::vector<std::size_t> rows);
Var softmax(Var a);
Var log_softmax(Var a);
Var layer_norm(Var a, double eps = 1e-5);
Var relu(Var a);
Var gelu(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var mean(Var a);
Var sum(Var a);
Var mean_rows(Var a);
Var causal_mask_fill(Var a);
Var transpose(Var a);
Var slice_last(Var a, std::size_t offset, std::size_t width);
Var pick(Var a, std::vector<std::size_t> per_row);
Var clip(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var square(Var a);

// Value written by causal_mask_fill; exp of it underflows to exactly zero.
inline constexpr double kMaskedLogit = -1e9;

}  // namespace jobgen::tensor
