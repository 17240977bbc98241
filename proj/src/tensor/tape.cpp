#include "jobgen/tensor/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jobgen/common/error.hpp"
#include "jobgen/tensor/kernels.hpp"

namespace jobgen::tensor {

std::string_view op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::scale: return "scale";
    case OpKind::concat_last: return "concat_last";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::softmax_last: return "softmax_last";
    case OpKind::log_softmax_last: return "log_softmax_last";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::relu: return "relu";
    case OpKind::gelu: return "gelu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::log_sigmoid: return "log_sigmoid";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::causal_mask_fill: return "causal_mask_fill";
    case OpKind::transpose: return "transpose";
    case OpKind::slice_last: return "slice_last";
    case OpKind::pick: return "pick";
    case OpKind::clip: return "clip";
    case OpKind::minimum: return "minimum";
    case OpKind::square: return "square";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_fail(OpKind kind, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

[[noreturn]] void shape_fail(OpKind kind, const Tensor& a, const std::string& why) {
  throw ShapeError(std::string(op_name(kind)) + ": " + why + " (shape " + shape_string(a.shape()) + ")");
}

enum class Broadcast { same, scalar, row };

Broadcast classify(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::scalar;
  if (b.rank() >= 1 && b.rank() <= 2 && b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  shape_fail(kind, a, b);
}

// Index into b for element i of a under the broadcast mode.
inline std::size_t bidx(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::same: return i;
    case Broadcast::scalar: return 0;
    case Broadcast::row: return i % cols;
  }
  return i;
}

void require_rank2(OpKind kind, const Tensor& a) {
  if (a.rank() != 2) shape_fail(kind, a, "expects a 2-D tensor");
}

}  // namespace

const Tensor* Gradients::find(const Parameter& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor& Gradients::slot(const Parameter& p) {
  auto it = grads_.find(&p);
  if (it == grads_.end()) it = grads_.emplace(&p, Tensor(p.value.shape(), 0.0)).first;
  return it->second;
}

void Gradients::accumulate(const Gradients& other) {
  for (const auto& [p, g] : other.grads_) {
    auto it = grads_.find(p);
    if (it == grads_.end()) {
      grads_.emplace(p, g);
    } else {
      it->second.add_scaled(g, 1.0);
    }
  }
}

void Gradients::scale(double alpha) {
  for (auto& [p, g] : grads_) g.scale(alpha);
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& [p, g] : grads_) {
    for (double v : g.data()) s += v * v;
  }
  return s;
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.value.set_requires_grad(false);
  return push(std::move(n));
}

NodeId Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.value.set_requires_grad(true);
  n.needs_grad = true;
  return push(std::move(n));
}

NodeId Tape::parameter(const Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  Node n;
  n.value = p.value;
  n.value.set_requires_grad(true);
  n.needs_grad = true;
  n.param = &p;
  NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

NodeId Tape::apply(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs) {
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) throw ShapeError(std::string(op_name(kind)) + ": unknown input node");
  }
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i]].value; };
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expects " + std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
    }
  };

  Node node;
  node.kind = kind;
  node.inputs.assign(inputs.begin(), inputs.end());
  node.attrs = attrs;
  Tensor& out = node.value;

  switch (kind) {
    case OpKind::leaf:
      throw ShapeError("leaf: use constant(), variable() or parameter()");

    case OpKind::matmul: {
      arity(2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) shape_fail(kind, a, b);
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      out = Tensor(Shape{m, n}, 0.0);
      kernels::matmul_acc(a.data(), b.data(), out.data(), m, k, n);
      break;
    }

    case OpKind::add:
    case OpKind::subtract:
    case OpKind::multiply: {
      arity(2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Broadcast mode = classify(kind, a, b);
      out = Tensor(a.shape(), 0.0);
      const std::size_t cols = a.cols();
      for (std::size_t i = 0; i < a.numel(); ++i) {
        double bv = b[bidx(mode, i, cols)];
        out[i] = kind == OpKind::add ? a[i] + bv : kind == OpKind::subtract ? a[i] - bv : a[i] * bv;
      }
      break;
    }

    case OpKind::scale: {
      arity(1);
      out = in(0);
      out.scale(attrs.scalar);
      break;
    }

    case OpKind::concat_last: {
      if (inputs.empty()) throw ShapeError("concat_last: no inputs");
      const Tensor& first = in(0);
      const std::size_t rows = first.rows();
      std::size_t total = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& t = in(i);
        if (t.rank() != first.rank() || t.rows() != rows) shape_fail(kind, first, t);
        total += t.cols();
      }
      Shape s = first.shape();
      if (s.empty()) s = Shape{total};
      else s.back() = total;
      out = Tensor(s, 0.0);
      std::size_t off = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& t = in(i);
        const std::size_t c = t.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(t.data().data() + r * c, c, out.data().data() + r * total + off);
        }
        off += c;
      }
      break;
    }

    case OpKind::gather_rows: {
      arity(1);
      const Tensor& table = in(0);
      require_rank2(kind, table);
      const std::size_t width = table.shape()[1];
      out = Tensor(Shape{attrs.indices.size(), width}, 0.0);
      for (std::size_t i = 0; i < attrs.indices.size(); ++i) {
        std::size_t r = attrs.indices[i];
        if (r >= table.shape()[0]) {
          shape_fail(kind, table, "row index " + std::to_string(r) + " out of range");
        }
        std::copy_n(table.data().data() + r * width, width, out.data().data() + i * width);
      }
      break;
    }

    case OpKind::softmax_last:
    case OpKind::log_softmax_last: {
      arity(1);
      out = in(0);
      const std::size_t c = out.cols();
      if (c == 0) shape_fail(kind, out, "empty last axis");
      for (std::size_t r = 0; r < out.rows(); ++r) {
        std::span<double> row(out.data().data() + r * c, c);
        if (kind == OpKind::softmax_last) {
          kernels::softmax_row(row);
        } else {
          double lse = kernels::log_sum_exp(row);
          for (double& v : row) v -= lse;
        }
      }
      break;
    }

    case OpKind::layer_norm: {
      arity(1);
      out = in(0);
      const std::size_t c = out.cols();
      if (c == 0) shape_fail(kind, out, "empty last axis");
      node.saved = Tensor(Shape{out.rows()}, 0.0);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        node.saved[r] = kernels::layer_norm_row(std::span<double>(out.data().data() + r * c, c), attrs.scalar);
      }
      break;
    }

    case OpKind::relu:
    case OpKind::gelu:
    case OpKind::sigmoid:
    case OpKind::log_sigmoid:
    case OpKind::exp:
    case OpKind::square: {
      arity(1);
      out = in(0);
      for (double& v : out.data()) {
        switch (kind) {
          case OpKind::relu: v = v > 0.0 ? v : 0.0; break;
          case OpKind::gelu: v = kernels::gelu(v); break;
          case OpKind::sigmoid: v = kernels::sigmoid(v); break;
          case OpKind::log_sigmoid: v = kernels::log_sigmoid(v); break;
          case OpKind::exp: v = std::exp(v); break;
          default: v = v * v; break;
        }
      }
      break;
    }

    case OpKind::log: {
      arity(1);
      out = in(0);
      for (double& v : out.data()) {
        if (!(v > 0.0)) throw ShapeError("log: non-positive input " + std::to_string(v));
        v = std::log(v);
      }
      break;
    }

    case OpKind::mean:
    case OpKind::sum: {
      arity(1);
      const Tensor& a = in(0);
      if (a.numel() == 0) shape_fail(kind, a, "empty input");
      double s = 0.0;
      for (double v : a.data()) s += v;
      out = Tensor::scalar(kind == OpKind::mean ? s / static_cast<double>(a.numel()) : s);
      break;
    }

    case OpKind::mean_rows: {
      arity(1);
      const Tensor& a = in(0);
      require_rank2(kind, a);
      const std::size_t rows = a.shape()[0], c = a.shape()[1];
      if (rows == 0) shape_fail(kind, a, "no rows");
      out = Tensor(Shape{1, c}, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) out[j] += a.at(r, j);
      }
      out.scale(1.0 / static_cast<double>(rows));
      break;
    }

    case OpKind::causal_mask_fill: {
      arity(1);
      out = in(0);
      require_rank2(kind, out);
      const std::size_t rows = out.shape()[0], c = out.shape()[1];
      if (rows > c) shape_fail(kind, out, "more rows than columns");
      const std::size_t shift = c - rows;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = r + shift + 1; j < c; ++j) out.at(r, j) = kMaskedLogit;
      }
      break;
    }

    case OpKind::transpose: {
      arity(1);
      const Tensor& a = in(0);
      require_rank2(kind, a);
      const std::size_t rows = a.shape()[0], c = a.shape()[1];
      out = Tensor(Shape{c, rows}, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) out.at(j, r) = a.at(r, j);
      }
      break;
    }

    case OpKind::slice_last: {
      arity(1);
      const Tensor& a = in(0);
      const std::size_t c = a.cols();
      if (attrs.offset + attrs.width > c || attrs.width == 0) {
        shape_fail(kind, a, "slice [" + std::to_string(attrs.offset) + ", +" + std::to_string(attrs.width) + ")");
      }
      Shape s = a.shape();
      if (s.empty()) s = Shape{attrs.width};
      else s.back() = attrs.width;
      out = Tensor(s, 0.0);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        std::copy_n(a.data().data() + r * c + attrs.offset, attrs.width, out.data().data() + r * attrs.width);
      }
      break;
    }

    case OpKind::pick: {
      arity(1);
      const Tensor& a = in(0);
      if (attrs.indices.size() != a.rows()) {
        shape_fail(kind, a, std::to_string(attrs.indices.size()) + " indices for " + std::to_string(a.rows()) + " rows");
      }
      out = Tensor(Shape{a.rows()}, 0.0);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (attrs.indices[r] >= a.cols()) shape_fail(kind, a, "column index out of range");
        out[r] = a.at(r, attrs.indices[r]);
      }
      break;
    }

    case OpKind::clip: {
      arity(1);
      if (attrs.scalar > attrs.scalar2) throw ShapeError("clip: lower bound exceeds upper bound");
      out = in(0);
      for (double& v : out.data()) v = std::clamp(v, attrs.scalar, attrs.scalar2);
      break;
    }

    case OpKind::minimum: {
      arity(2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) shape_fail(kind, a, b);
      out = a;
      for (std::size_t i = 0; i < a.numel(); ++i) out[i] = std::min(a[i], b[i]);
      break;
    }
  }

  for (NodeId id : inputs) {
    if (nodes_[id].needs_grad) {
      node.needs_grad = true;
      break;
    }
  }
  if (!node.needs_grad) {
    node.inputs.clear();
    node.saved = Tensor();
  }
  out.set_requires_grad(node.needs_grad);
  return push(std::move(node));
}

const Tensor& Tape::gradient(NodeId id) const {
  if (id >= grads_.size()) throw ShapeError("gradient: no backward pass has reached this node");
  return grads_[id];
}

Gradients Tape::backward(NodeId root) {
  if (root >= nodes_.size()) throw ShapeError("backward: unknown root");
  if (nodes_[root].value.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + shape_string(nodes_[root].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].needs_grad) grads_[i] = Tensor(nodes_[i].value.shape(), 0.0);
  }
  Gradients result;
  for (auto& n : nodes_) {
    if (n.param) result.slot(*n.param);
  }
  if (!nodes_[root].needs_grad) return result;
  grads_[root][0] = 1.0;

  for (std::size_t idx = root + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    if (!node.needs_grad || node.kind == OpKind::leaf) continue;
    const Tensor& g = grads_[idx];
    const Tensor& y = node.value;
    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
    auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].needs_grad; };
    auto gin = [&](std::size_t i) -> Tensor& { return grads_[node.inputs[i]]; };

    switch (node.kind) {
      case OpKind::leaf:
        break;

      case OpKind::matmul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
        if (wants(0)) kernels::matmul_nt_acc(g.data(), b.data(), gin(0).data(), m, n, k);
        if (wants(1)) kernels::matmul_tn_acc(a.data(), g.data(), gin(1).data(), m, k, n);
        break;
      }

      case OpKind::add:
      case OpKind::subtract:
      case OpKind::multiply: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Broadcast mode = classify(node.kind, a, b);
        const std::size_t cols = a.cols();
        const double sign = node.kind == OpKind::subtract ? -1.0 : 1.0;
        for (std::size_t i = 0; i < a.numel(); ++i) {
          const std::size_t j = bidx(mode, i, cols);
          if (node.kind == OpKind::multiply) {
            if (wants(0)) gin(0)[i] += g[i] * b[j];
            if (wants(1)) gin(1)[j] += g[i] * a[i];
          } else {
            if (wants(0)) gin(0)[i] += g[i];
            if (wants(1)) gin(1)[j] += sign * g[i];
          }
        }
        break;
      }

      case OpKind::scale: {
        gin(0).add_scaled(g, node.attrs.scalar);
        break;
      }

      case OpKind::concat_last: {
        const std::size_t rows = y.rows(), total = y.cols();
        std::size_t off = 0;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          const std::size_t c = in(i).cols();
          if (wants(i)) {
            Tensor& gi = gin(i);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) gi[r * c + j] += g[r * total + off + j];
            }
          }
          off += c;
        }
        break;
      }

      case OpKind::gather_rows: {
        Tensor& gt = gin(0);
        const std::size_t width = y.cols();
        for (std::size_t i = 0; i < node.attrs.indices.size(); ++i) {
          const std::size_t r = node.attrs.indices[i];
          for (std::size_t j = 0; j < width; ++j) gt[r * width + j] += g[i * width + j];
        }
        break;
      }

      case OpKind::softmax_last: {
        Tensor& gi = gin(0);
        const std::size_t c = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) gi[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
        }
        break;
      }

      case OpKind::log_softmax_last: {
        Tensor& gi = gin(0);
        const std::size_t c = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double total = 0.0;
          for (std::size_t j = 0; j < c; ++j) total += g[r * c + j];
          for (std::size_t j = 0; j < c; ++j) gi[r * c + j] += g[r * c + j] - std::exp(y[r * c + j]) * total;
        }
        break;
      }

      case OpKind::layer_norm: {
        Tensor& gi = gin(0);
        const std::size_t c = y.cols();
        const double n = static_cast<double>(c);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          const double inv = node.saved[r];
          double sg = 0.0, sgx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            sg += g[r * c + j];
            sgx += g[r * c + j] * y[r * c + j];
          }
          for (std::size_t j = 0; j < c; ++j) {
            gi[r * c + j] += inv / n * (n * g[r * c + j] - sg - y[r * c + j] * sgx);
          }
        }
        break;
      }

      case OpKind::relu:
      case OpKind::gelu:
      case OpKind::sigmoid:
      case OpKind::log_sigmoid:
      case OpKind::log:
      case OpKind::exp:
      case OpKind::square: {
        Tensor& gi = gin(0);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          double d = 0.0;
          switch (node.kind) {
            case OpKind::relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
            case OpKind::gelu: d = kernels::gelu_grad(x[i]); break;
            case OpKind::sigmoid: d = y[i] * (1.0 - y[i]); break;
            case OpKind::log_sigmoid: d = kernels::sigmoid(-x[i]); break;
            case OpKind::log: d = 1.0 / x[i]; break;
            case OpKind::exp: d = y[i]; break;
            default: d = 2.0 * x[i]; break;
          }
          gi[i] += g[i] * d;
        }
        break;
      }

      case OpKind::mean:
      case OpKind::sum: {
        Tensor& gi = gin(0);
        const double d = node.kind == OpKind::mean ? g[0] / static_cast<double>(gi.numel()) : g[0];
        for (double& v : gi.data()) v += d;
        break;
      }

      case OpKind::mean_rows: {
        Tensor& gi = gin(0);
        const std::size_t rows = gi.shape()[0], c = gi.shape()[1];
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) gi[r * c + j] += g[j] * inv;
        }
        break;
      }

      case OpKind::causal_mask_fill: {
        Tensor& gi = gin(0);
        const std::size_t rows = y.shape()[0], c = y.shape()[1];
        const std::size_t shift = c - rows;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j <= r + shift && j < c; ++j) gi[r * c + j] += g[r * c + j];
        }
        break;
      }

      case OpKind::transpose: {
        Tensor& gi = gin(0);
        const std::size_t rows = gi.shape()[0], c = gi.shape()[1];
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) gi[r * c + j] += g[j * rows + r];
        }
        break;
      }

      case OpKind::slice_last: {
        Tensor& gi = gin(0);
        const std::size_t c = gi.cols(), w = node.attrs.width, off = node.attrs.offset;
        for (std::size_t r = 0; r < gi.rows(); ++r) {
          for (std::size_t j = 0; j < w; ++j) gi[r * c + off + j] += g[r * w + j];
        }
        break;
      }

      case OpKind::pick: {
        Tensor& gi = gin(0);
        const std::size_t c = gi.cols();
        for (std::size_t r = 0; r < gi.rows(); ++r) gi[r * c + node.attrs.indices[r]] += g[r];
        break;
      }

      case OpKind::clip: {
        Tensor& gi = gin(0);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          if (x[i] >= node.attrs.scalar && x[i] <= node.attrs.scalar2) gi[i] += g[i];
        }
        break;
      }

      case OpKind::minimum: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < a.numel(); ++i) {
          if (a[i] <= b[i]) {
            if (wants(0)) gin(0)[i] += g[i];
          } else if (wants(1)) {
            gin(1)[i] += g[i];
          }
        }
        break;
      }
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param) result.slot(*nodes_[i].param).add_scaled(grads_[i], 1.0);
  }
  return result;
}

// ---------------------------------------------------------------------------

Var constant(Tape& tape, Tensor value) { return {&tape, tape.constant(std::move(value))}; }
Var variable(Tape& tape, Tensor value) { return {&tape, tape.variable(std::move(value))}; }
Var parameter(Tape& tape, const Parameter& p) { return {&tape, tape.parameter(p)}; }

namespace {

Var unary(OpKind kind, Var a, OpAttrs attrs = {}) {
  NodeId ids[] = {a.id};
  return {a.tape, a.tape->apply(kind, ids, attrs)};
}

Var binary(OpKind kind, Var a, Var b) {
  if (a.tape != b.tape) throw ShapeError(std::string(op_name(kind)) + ": operands live on different tapes");
  NodeId ids[] = {a.id, b.id};
  return {a.tape, a.tape->apply(kind, ids)};
}

}  // namespace

Var matmul(Var a, Var b) { return binary(OpKind::matmul, a, b); }
Var add(Var a, Var b) { return binary(OpKind::add, a, b); }
Var subtract(Var a, Var b) { return binary(OpKind::subtract, a, b); }
Var multiply(Var a, Var b) { return binary(OpKind::multiply, a, b); }
Var minimum(Var a, Var b) { return binary(OpKind::minimum, a, b); }

Var scale(Var a, double alpha) {
  OpAttrs attrs;
  attrs.scalar = alpha;
  return unary(OpKind::scale, a, attrs);
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (const Var& v : parts) {
    if (v.tape != parts[0].tape) throw ShapeError("concat_last: operands live on different tapes");
    ids.push_back(v.id);
  }
  return {parts[0].tape, parts[0].tape->apply(OpKind::concat_last, ids)};
}

Var gather_rows(Var table, std::vector<std::size_t> rows) {
  OpAttrs attrs;
  attrs.indices = std::move(rows);
  return unary(OpKind::gather_rows, table, std::move(attrs));
}

Var softmax(Var a) { return unary(OpKind::softmax_last, a); }
Var log_softmax(Var a) { return unary(OpKind::log_softmax_last, a); }

Var layer_norm(Var a, double eps) {
  OpAttrs attrs;
  attrs.scalar = eps;
  return unary(OpKind::layer_norm, a, attrs);
}

Var relu(Var a) { return unary(OpKind::relu, a); }
Var gelu(Var a) { return unary(OpKind::gelu, a); }
Var sigmoid(Var a) { return unary(OpKind::sigmoid, a); }
Var log_sigmoid(Var a) { return unary(OpKind::log_sigmoid, a); }
Var log(Var a) { return unary(OpKind::log, a); }
Var exp(Var a) { return unary(OpKind::exp, a); }
Var mean(Var a) { return unary(OpKind::mean, a); }
Var sum(Var a) { return unary(OpKind::sum, a); }
Var mean_rows(Var a) { return unary(OpKind::mean_rows, a); }
Var causal_mask_fill(Var a) { return unary(OpKind::causal_mask_fill, a); }
Var transpose(Var a) { return unary(OpKind::transpose, a); }
Var square(Var a) { return unary(OpKind::square, a); }

Var slice_last(Var a, std::size_t offset, std::size_t width) {
  OpAttrs attrs;
  attrs.offset = offset;
  attrs.width = width;
  return unary(OpKind::slice_last, a, attrs);
}

Var pick(Var a, std::vector<std::size_t> per_row) {
  OpAttrs attrs;
  attrs.indices = std::move(per_row);
  return unary(OpKind::pick, a, std::move(attrs));
}

Var clip(Var a, double lo, double hi) {
  OpAttrs attrs;
  attrs.scalar = lo;
  attrs.scalar2 = hi;
  return unary(OpKind::clip, a, attrs);
}

}  // namespace jobgen::tensor
