// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "copsd/diffcore/array.hpp"

namespace copsd {

enum class OpKind {
  kLeaf,
  kMatmul,
  kMatmulNT,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddRow,
  kGelu,
  kExp,
  kLog,
  kSum,
  kMean,
  kSumRows,
  kSoftmax,
  kLogSoftmax,
  kLayerNorm,
  kEmbedding,
  kCausalAttention,
  kPick,
  kSliceRows,
  kStopGradient,
  kRowKl,
  kCustom,
};

class Graph;

// Handle to a node of one Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in creation order; backward() walks
// the subgraph reachable from a scalar root in reverse topological order and
// only visits nodes that depend on a differentiable leaf.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf owning its value.
  Var leaf(Array value, bool requires_grad = true);
  // Leaf viewing an external array; the array must outlive the graph.
  Var leaf_ref(const Array& value, bool requires_grad = true);
  Var constant(Array value) { return leaf(std::move(value), false); }

  // Appends an op node. requires_grad is inherited from the parents.
  Var add_node(OpKind kind, std::vector<Var> parents, Array value, BackwardFn backward);

  // Value copy of v that blocks gradient flow back into v.
  Var detach(Var v);

  // Rewires a node's parents. Only used to build custom topologies; a cycle
  // introduced this way is reported by backward().
  void reparent(Var node, std::span<const Var> parents);

  void backward(Var root);
  void zero_grad();

  const Array& value(Var v) const { return value(v.id()); }
  const Array& value(std::uint32_t id) const;
  // Gradient of the last backward root w.r.t. v; zeros when none reached v.
  Array grad(Var v) const;
  bool has_grad(Var v) const { return !nodes_[v.id()].grad.empty(); }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  OpKind kind(Var v) const { return nodes_[v.id()].kind; }
  std::size_t size() const { return nodes_.size(); }

  // For backward implementations: upstream gradient of `self` and the
  // accumulation buffer of a parent (nullptr when the parent is frozen).
  const Array& upstream(std::uint32_t self) const { return nodes_[self].grad; }
  Array* accum(std::uint32_t id);
  const std::vector<std::uint32_t>& parents(std::uint32_t id) const { return nodes_[id].parents; }

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<std::uint32_t> parents;
    Array value;
    const Array* borrowed = nullptr;
    Array grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  // A deque keeps value references valid while nodes are appended.
  std::deque<Node> nodes_;
};

// ---- differentiable operations ----------------------------------------------

Var matmul(Var a, Var b);     // [m×k]·[k×n]
Var matmul_nt(Var a, Var b);  // [m×k]·[n×k]ᵀ
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var bias);  // broadcast bias[n] over rows of a[...×n]
Var gelu(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
Var sum_rows(Var a);  // [m×n] -> [m]
Var softmax(Var logits, double temperature = 1.0);
Var log_softmax(Var logits, double temperature = 1.0);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var embedding(Var table, std::span<const int> ids);
// qkv is [T×3d] (queries, keys, values side by side); output [T×d].
Var causal_self_attention(Var qkv, std::size_t n_heads);
Var pick(Var a, std::span<const int> cols);  // [m×n] -> [m], a[r, cols[r]]
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var stop_gradient(Var a);
// Row-wise KL(softmax(a_r) || softmax(b_r)) from logits, [m×n] -> [m].
Var kl_rows(Var a, Var b);

// ---- plain (non-graph) helpers ----------------------------------------------

Array softmax(const Array& logits, double temperature = 1.0);
Array log_softmax(const Array& logits, double temperature = 1.0);
void softmax_row(std::span<const double> in, std::span<double> out, double temperature = 1.0);
void log_softmax_row(std::span<const double> in, std::span<double> out, double temperature = 1.0);

}  // namespace copsd
