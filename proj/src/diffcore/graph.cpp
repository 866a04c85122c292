// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/diffcore/graph.hpp"

#include "copsd/errors.hpp"

namespace copsd {

const Array& Var::value() const { return graph_->value(id_); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::leaf(Array value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::leaf_ref(const Array& value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.borrowed = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::add_node(OpKind kind, std::vector<Var> parents, Array value, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (&p.graph() != this) throw GraphError("operand belongs to a different graph");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Graph::detach(Var v) {
  Node n;
  n.kind = OpKind::kStopGradient;
  n.value = value(v.id());
  n.parents = {v.id()};
  n.requires_grad = false;
  return push(std::move(n));
}

void Graph::reparent(Var node, std::span<const Var> parents) {
  auto& n = nodes_.at(node.id());
  n.parents.clear();
  for (const auto& p : parents) {
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_.at(p.id()).requires_grad;
  }
}

const Array& Graph::value(std::uint32_t id) const {
  const auto& n = nodes_.at(id);
  return n.borrowed ? *n.borrowed : n.value;
}

Array Graph::grad(Var v) const {
  const auto& n = nodes_.at(v.id());
  if (!n.grad.empty()) return n.grad;
  return Array::zeros_like(value(v.id()));
}

Array* Graph::accum(std::uint32_t id) {
  auto& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Array::zeros_like(value(id));
  return &n.grad;
}

void Graph::zero_grad() {
  for (auto& n : nodes_) n.grad = Array();
}

void Graph::backward(Var root) {
  if (&root.graph() != this) throw GraphError("backward root belongs to a different graph");
  if (value(root).size() != 1) {
    throw ContractError("backward root must be scalar, got shape " + shape_string(value(root).shape()));
  }
  zero_grad();
  if (!nodes_[root.id()].requires_grad) return;

  // Iterative DFS post-order over differentiable nodes; a grey node seen
  // again closes a cycle.
  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<std::uint8_t> colour(nodes_.size(), kWhite);
  std::vector<std::uint32_t> order;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack;
  stack.emplace_back(root.id(), 0);
  colour[root.id()] = kGrey;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const auto& parents = nodes_[id].parents;
    if (next < parents.size()) {
      const auto p = parents[next++];
      if (!nodes_[p].requires_grad) continue;
      if (colour[p] == kGrey) throw GraphError("cycle detected at node " + std::to_string(p));
      if (colour[p] == kWhite) {
        colour[p] = kGrey;
        stack.emplace_back(p, 0);
      }
    } else {
      colour[id] = kBlack;
      order.push_back(id);
      stack.pop_back();
    }
  }

  nodes_[root.id()].grad = Array(value(root).shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& n = nodes_[*it];
    if (n.kind == OpKind::kLeaf || n.grad.empty() || !n.backward) continue;
    n.backward(*this, *it);
  }
}

}  // namespace copsd
