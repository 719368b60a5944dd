#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is an immutable value (its buffer is shared copy-on-write). A
// Tensor that carries a tape handle participates in differentiation; every
// op whose inputs include such a tensor appends a node to that tape. Tensors
// without a handle are constants, which is also what detach() returns.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mppde/error.hpp"

namespace mppde {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;
using Index = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Concat,
  Slice,
  Swish,
  Conv1d,
  ScatterAdd,
  Gather,
  Sum,
  Mean,
  Mse,
  Reshape,
  Transpose,
};

namespace detail {

/// Receives the upstream gradient of a node and accumulates into the
/// gradient buffers of its operands (nullptr for constant operands).
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> grad_in)>;

struct Node {
  OpKind op = OpKind::Leaf;
  std::vector<std::optional<NodeId>> inputs;
  Shape shape;
  std::shared_ptr<const std::vector<double>> value;
  BackwardFn backward;
};

struct TapeState {
  std::vector<Node> nodes;
};

}  // namespace detail

class Tape;

class Tensor {
 public:
  Tensor() : data_(std::make_shared<std::vector<double>>()) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(values))) {
    require(shape_numel(shape_) == data_->size(), ErrorCode::ShapeMismatch,
            "shape " + shape_string(shape_) + " does not match " + std::to_string(data_->size()) + " values");
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_->size(); }

  std::span<const double> data() const { return *data_; }
  const std::vector<double>& values() const { return *data_; }
  /// Shared read-only buffer, for capturing values without a copy.
  std::shared_ptr<const std::vector<double>> buffer() const { return data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  /// Writable view; detaches from the tape and unshares the buffer.
  std::span<double> mutable_data() {
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
    tape_.reset();
    node_.reset();
    return *data_;
  }

  double item() const {
    require(numel() == 1, ErrorCode::NotScalar, "item() on tensor of shape " + shape_string(shape_));
    return (*data_)[0];
  }

  bool requires_grad() const { return node_.has_value(); }
  std::optional<NodeId> node() const { return node_; }
  bool on_tape(const Tape& tape) const;

  /// Bitwise equality of shape and values (tape handles ignored).
  bool same_values(const Tensor& other) const { return shape_ == other.shape_ && *data_ == *other.data_; }

 private:
  friend class Tape;
  friend Tensor detach(const Tensor&);
  friend Tensor record(OpKind, std::span<const Tensor* const>, Shape, std::vector<double>,
                       detail::BackwardFn);

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<detail::TapeState> tape_;
  std::optional<NodeId> node_;
};

/// Gradients of a scalar with respect to the leaves of a tape.
class Gradients {
 public:
  /// Gradient for `leaf`, or nullptr if it received none.
  const Tensor* find(const Tensor& leaf) const {
    if (!leaf.node()) return nullptr;
    auto it = by_node_.find(*leaf.node());
    return it == by_node_.end() ? nullptr : &it->second;
  }

  /// Gradient for `leaf`, zeros if it received none.
  Tensor of(const Tensor& leaf) const {
    const Tensor* g = find(leaf);
    return g ? *g : Tensor::zeros(leaf.shape());
  }

  const std::unordered_map<NodeId, Tensor>& by_node() const { return by_node_; }

 private:
  friend class Tape;
  std::unordered_map<NodeId, Tensor> by_node_;
};

class Tape {
 public:
  Tape() : state_(std::make_shared<detail::TapeState>()) {}

  /// Registers `value` as a differentiable leaf.
  Tensor variable(const Tensor& value) {
    detail::Node n;
    n.op = OpKind::Leaf;
    n.shape = value.shape();
    n.value = value.data_;
    state_->nodes.push_back(std::move(n));
    Tensor t = value;
    t.tape_ = state_;
    t.node_ = state_->nodes.size() - 1;
    return t;
  }

  std::size_t size() const { return state_->nodes.size(); }
  OpKind op(NodeId id) const { return state_->nodes.at(id).op; }
  const std::vector<std::optional<NodeId>>& inputs(NodeId id) const { return state_->nodes.at(id).inputs; }

  /// Structural and value equality (ops, wiring, shapes, recorded values).
  bool same_as(const Tape& other) const {
    const auto& a = state_->nodes;
    const auto& b = other.state_->nodes;
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].op != b[i].op || a[i].inputs != b[i].inputs || a[i].shape != b[i].shape ||
          *a[i].value != *b[i].value) {
        return false;
      }
    }
    return true;
  }

  /// Reverse sweep from a scalar loss. Each node reached by a nonzero path
  /// is processed exactly once, in reverse recording order.
  Gradients backward(const Tensor& loss) const {
    require(loss.numel() == 1, ErrorCode::NotScalar,
            "backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    require(loss.on_tape(*this), ErrorCode::InvalidArgument, "loss is not recorded on this tape");
    const auto& nodes = state_->nodes;
    const NodeId root = *loss.node();
    std::vector<std::vector<double>> grads(root + 1);
    grads[root] = {1.0};
    visited_ = 0;
    for (NodeId id = root + 1; id-- > 0;) {
      if (grads[id].empty()) continue;
      ++visited_;
      const auto& node = nodes[id];
      if (node.op == OpKind::Leaf) continue;
      std::vector<std::vector<double>*> targets(node.inputs.size(), nullptr);
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        if (!node.inputs[j]) continue;
        auto& g = grads[*node.inputs[j]];
        if (g.empty()) g.assign(nodes[*node.inputs[j]].value->size(), 0.0);
        targets[j] = &g;
      }
      node.backward(grads[id], targets);
    }
    Gradients out;
    for (NodeId id = 0; id <= root; ++id) {
      if (nodes[id].op == OpKind::Leaf && !grads[id].empty()) {
        out.by_node_.emplace(id, Tensor(nodes[id].shape, std::move(grads[id])));
      }
    }
    return out;
  }

  /// Number of nodes processed by the last backward().
  std::size_t last_visit_count() const { return visited_; }

 private:
  friend class Tensor;
  friend Tensor record(OpKind, std::span<const Tensor* const>, Shape, std::vector<double>,
                       detail::BackwardFn);
  std::shared_ptr<detail::TapeState> state_;
  mutable std::size_t visited_ = 0;
};

inline bool Tensor::on_tape(const Tape& tape) const { return node_ && tape_ == tape.state_; }

inline Gradients backward(const Tape& tape, const Tensor& loss) { return tape.backward(loss); }

/// Builds the op result; appends a node when any operand is on a tape.
inline Tensor record(OpKind op, std::span<const Tensor* const> operands, Shape shape,
                     std::vector<double> value, detail::BackwardFn backward) {
#ifndef NDEBUG
  for (double v : value) {
    if (!std::isfinite(v)) fail(ErrorCode::SolutionBlowup, "non-finite value produced by tensor op");
  }
#endif
  Tensor out(std::move(shape), std::move(value));
  std::shared_ptr<detail::TapeState> tape;
  for (const Tensor* t : operands) {
    if (!t->node_) continue;
    if (tape && tape != t->tape_) fail(ErrorCode::InvalidArgument, "operands recorded on different tapes");
    tape = t->tape_;
  }
  if (!tape) return out;
  detail::Node n;
  n.op = op;
  n.shape = out.shape_;
  n.value = out.data_;
  n.backward = std::move(backward);
  for (const Tensor* t : operands) n.inputs.push_back(t->node_);
  tape->nodes.push_back(std::move(n));
  out.tape_ = std::move(tape);
  out.node_ = out.tape_->nodes.size() - 1;
  return out;
}

inline Tensor record(OpKind op, std::initializer_list<const Tensor*> operands, Shape shape,
                     std::vector<double> value, detail::BackwardFn backward) {
  return record(op, std::span<const Tensor* const>(operands.begin(), operands.size()), std::move(shape),
                std::move(value), std::move(backward));
}

inline Tensor detach(const Tensor& t) {
  Tensor out = t;
  out.tape_.reset();
  out.node_.reset();
  return out;
}

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline void require_shape(bool ok, const std::string& what) { require(ok, ErrorCode::ShapeMismatch, what); }

/// b broadcasts against a when b's shape is a suffix of a's.
inline bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

inline void accumulate(std::vector<double>* target, std::span<const double> g) {
  if (!target) return;
  for (std::size_t i = 0; i < g.size(); ++i) (*target)[i] += g[i];
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                        "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  // Fixed summation order (k ascending per output) keeps results reproducible
  // against plain-loop references; Eigen's blocked kernels reorder the sum.
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (Eigen::Index i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (Eigen::Index p = 0; p < k; ++p) {
      const double av = ap[i * k + p];
      const double* brow = bp + p * n;
      for (Eigen::Index j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return record(OpKind::MatMul, {&a, &b}, {a.dim(0), b.dim(1)}, std::move(out),
                [av = a.buffer(), bv = b.buffer(), m, k, n](std::span<const double> g, auto in) {
                  const detail::ConstMap gm(g.data(), m, n);
                  if (in[0]) detail::MutMap(in[0]->data(), m, k).noalias() += gm * detail::ConstMap(bv->data(), k, n).transpose();
                  if (in[1]) detail::MutMap(in[1]->data(), k, n).noalias() += detail::ConstMap(av->data(), m, k).transpose() * gm;
                });
}

namespace detail {

template <typename Fwd, typename Da, typename Db>
Tensor broadcast_binary(OpKind op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  require_shape(is_suffix(a.shape(), b.shape()),
                "cannot broadcast " + shape_string(b.shape()) + " onto " + shape_string(a.shape()));
  const std::size_t n = a.numel();
  const std::size_t period = std::max<std::size_t>(b.numel(), 1);
  std::vector<double> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % period]);
  return record(op, {&a, &b}, a.shape(), std::move(out),
                [avals = a.buffer(), bvals = b.buffer(), period, da, db](std::span<const double> g, auto in) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = (*avals)[i];
                    const double y = (*bvals)[i % period];
                    if (in[0]) (*in[0])[i] += da(g[i], x, y);
                    if (in[1]) (*in[1])[i % period] += db(g[i], x, y);
                  }
                });
}

}  // namespace detail

/// Elementwise a + b, with b broadcast over a's leading dimensions.
inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      OpKind::Add, a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      OpKind::Sub, a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      OpKind::Mul, a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; }, [](double g, double x, double) { return g * x; });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
  return record(OpKind::Scale, {&a}, a.shape(), std::move(out), [c](std::span<const double> g, auto in) {
    for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += c * g[i];
  });
}

inline Tensor swish(const Tensor& x) {
  std::vector<double> out(x.numel());
  std::vector<double> sig(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    sig[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    out[i] = xv[i] * sig[i];
  }
  return record(OpKind::Swish, {&x}, x.shape(), std::move(out),
                [xvals = x.buffer(), sig = std::move(sig)](std::span<const double> g, auto in) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    (*in[0])[i] += g[i] * (sig[i] + (*xvals)[i] * sig[i] * (1.0 - sig[i]));
                  }
                });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  detail::require_shape(shape_numel(shape) == x.numel(),
                        "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  return record(OpKind::Reshape, {&x}, std::move(shape), std::vector<double>(x.values()),
                [](std::span<const double> g, auto in) { detail::accumulate(in[0], g); });
}

inline Tensor transpose(const Tensor& x) {
  detail::require_shape(x.rank() == 2, "transpose needs a matrix, got " + shape_string(x.shape()));
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return record(OpKind::Transpose, {&x}, {c, r}, std::move(out), [r, c](std::span<const double> g, auto in) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*in[0])[i * c + j] += g[j * r + i];
  });
}

/// Concatenates along `axis`; all other dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorCode::ShapeMismatch, "concat of zero tensors");
  const Shape& first = parts.front().shape();
  detail::require_shape(axis < first.size(), "concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_shape(p.rank() == first.size(), "concat rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      detail::require_shape(d == axis || p.dim(d) == first[d],
                            "concat shape mismatch " + shape_string(p.shape()) + " vs " + shape_string(first));
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = out_shape[axis] * inner;

  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    }
    offset += widths[k];
  }

  std::vector<const Tensor*> operands;
  for (const auto& p : parts) operands.push_back(&p);
  return record(OpKind::Concat, operands, std::move(out_shape), std::move(out),
                [widths, outer, row](std::span<const double> g, std::span<std::vector<double>* const> in) {
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < widths.size(); ++k) {
                    if (in[k]) {
                      for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t i = 0; i < widths[k]; ++i)
                          (*in[k])[o * widths[k] + i] += g[o * row + off + i];
                    }
                    off += widths[k];
                  }
                });
}

/// Elements [start, start + length) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  detail::require_shape(axis < x.rank(), "slice axis out of range");
  require(start + length <= x.dim(axis), ErrorCode::IndexOutOfBounds,
          "slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") exceeds dimension " +
              std::to_string(x.dim(axis)));
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t src_row = x.dim(axis) * inner;
  const std::size_t dst_row = length * inner;
  const std::size_t skip = start * inner;
  std::vector<double> out(outer * dst_row);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * src_row + skip), dst_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * dst_row));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  return record(OpKind::Slice, {&x}, std::move(shape), std::move(out),
                [outer, src_row, dst_row, skip](std::span<const double> g, auto in) {
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < dst_row; ++i) (*in[0])[o * src_row + skip + i] += g[o * dst_row + i];
                });
}

namespace detail {

inline std::size_t row_width(const Shape& s) {
  std::size_t w = 1;
  for (std::size_t d = 1; d < s.size(); ++d) w *= s[d];
  return w;
}

inline void check_index(const Index& index, std::size_t bound) {
  for (std::size_t i : index) {
    require(i < bound, ErrorCode::IndexOutOfBounds,
            "index " + std::to_string(i) + " out of range for dimension " + std::to_string(bound));
  }
}

inline void scatter_rows(std::span<const double> src, const Index& index, std::size_t width, std::span<double> dst) {
  for (std::size_t e = 0; e < index.size(); ++e) {
    const double* s = src.data() + e * width;
    double* d = dst.data() + index[e] * width;
    for (std::size_t f = 0; f < width; ++f) d[f] += s[f];
  }
}

inline void gather_rows(std::span<const double> src, const Index& index, std::size_t width, std::span<double> dst) {
  for (std::size_t e = 0; e < index.size(); ++e) {
    const double* s = src.data() + index[e] * width;
    double* d = dst.data() + e * width;
    for (std::size_t f = 0; f < width; ++f) d[f] += s[f];
  }
}

}  // namespace detail

/// out[index[e]] += src[e] along the leading dimension; out has `rows` rows.
inline Tensor scatter_add(const Tensor& src, const Index& index, std::size_t rows) {
  detail::require_shape(src.rank() >= 1 && src.dim(0) == index.size(),
                        "scatter_add: " + std::to_string(index.size()) + " indices for source " +
                            shape_string(src.shape()));
  detail::check_index(index, rows);
  const std::size_t width = detail::row_width(src.shape());
  Shape shape = src.shape();
  shape[0] = rows;
  std::vector<double> out(rows * width, 0.0);
  detail::scatter_rows(src.data(), index, width, out);
  auto idx = std::make_shared<const Index>(index);
  return record(OpKind::ScatterAdd, {&src}, std::move(shape), std::move(out),
                [idx, width](std::span<const double> g, auto in) { detail::gather_rows(g, *idx, width, *in[0]); });
}

/// out[e] = src[index[e]] along the leading dimension.
inline Tensor gather(const Tensor& src, const Index& index) {
  detail::require_shape(src.rank() >= 1, "gather needs rank >= 1");
  detail::check_index(index, src.dim(0));
  const std::size_t width = detail::row_width(src.shape());
  Shape shape = src.shape();
  shape[0] = index.size();
  std::vector<double> out(index.size() * width, 0.0);
  detail::gather_rows(src.data(), index, width, out);
  auto idx = std::make_shared<const Index>(index);
  return record(OpKind::Gather, {&src}, std::move(shape), std::move(out),
                [idx, width](std::span<const double> g, auto in) { detail::scatter_rows(g, *idx, width, *in[0]); });
}

/// 1D convolution over [batch, in_channels, length] with kernel
/// [out_channels, in_channels, width] (odd width), zero padding, stride 1.
inline Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  detail::require_shape(x.rank() == 3 && kernel.rank() == 3 && bias.rank() == 1,
                        "conv1d expects x [N,C,L], kernel [O,C,W], bias [O]");
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = kernel.dim(0), width = kernel.dim(2);
  detail::require_shape(kernel.dim(1) == cin && bias.dim(0) == cout && width % 2 == 1,
                        "conv1d kernel " + shape_string(kernel.shape()) + " incompatible with input " +
                            shape_string(x.shape()));
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  const auto xv = x.data();
  const auto kv = kernel.data();
  const auto bv = bias.data();
  std::vector<double> out(batch * cout * len);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* dst = out.data() + (n * cout + o) * len;
      for (std::size_t p = 0; p < len; ++p) dst[p] = bv[o];
      for (std::size_t c = 0; c < cin; ++c) {
        const double* src = xv.data() + (n * cin + c) * len;
        const double* w = kv.data() + (o * cin + c) * width;
        for (std::size_t k = 0; k < width; ++k) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
          const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t hi = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
          for (std::size_t p = lo; p < hi; ++p) dst[p] += w[k] * src[static_cast<std::ptrdiff_t>(p) + shift];
        }
      }
    }
  }
  return record(OpKind::Conv1d, {&x, &kernel, &bias}, {batch, cout, len}, std::move(out),
                [xvals = x.buffer(), kvals = kernel.buffer(), batch, cin, cout, len, width,
                 pad](std::span<const double> g, auto in) {
                  for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t o = 0; o < cout; ++o) {
                      const double* go = g.data() + (n * cout + o) * len;
                      if (in[2]) {
                        for (std::size_t p = 0; p < len; ++p) (*in[2])[o] += go[p];
                      }
                      for (std::size_t c = 0; c < cin; ++c) {
                        const std::size_t xoff = (n * cin + c) * len;
                        const std::size_t woff = (o * cin + c) * width;
                        for (std::size_t k = 0; k < width; ++k) {
                          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
                          const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                          const std::size_t hi = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
                          double wg = 0.0;
                          for (std::size_t p = lo; p < hi; ++p) {
                            const std::size_t xi = xoff + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(p) + shift);
                            wg += go[p] * (*xvals)[xi];
                            if (in[0]) (*in[0])[xi] += go[p] * (*kvals)[woff + k];
                          }
                          if (in[1]) (*in[1])[woff + k] += wg;
                        }
                      }
                    }
                  }
                });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return record(OpKind::Sum, {&x}, {}, {s}, [](std::span<const double> g, auto in) {
    for (double& v : *in[0]) v += g[0];
  });
}

inline Tensor mean(const Tensor& x) {
  require(x.numel() > 0, ErrorCode::ShapeMismatch, "mean of an empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  return record(OpKind::Mean, {&x}, {}, {s / n}, [n](std::span<const double> g, auto in) {
    for (double& v : *in[0]) v += g[0] / n;
  });
}

/// Mean squared error over all elements.
inline Tensor mse(const Tensor& pred, const Tensor& target) {
  detail::require_shape(pred.shape() == target.shape(), "mse shapes " + shape_string(pred.shape()) + " vs " +
                                                            shape_string(target.shape()));
  require(pred.numel() > 0, ErrorCode::ShapeMismatch, "mse of empty tensors");
  std::vector<double> diff(pred.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = pred[i] - target[i];
    s += diff[i] * diff[i];
  }
  const double n = static_cast<double>(diff.size());
  return record(OpKind::Mse, {&pred, &target}, {}, {s / n},
                [diff = std::move(diff), n](std::span<const double> g, auto in) {
                  for (std::size_t i = 0; i < diff.size(); ++i) {
                    const double d = 2.0 * g[0] * diff[i] / n;
                    if (in[0]) (*in[0])[i] += d;
                    if (in[1]) (*in[1])[i] -= d;
                  }
                });
}

}  // namespace mppde
