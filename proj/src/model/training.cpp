// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/model/training.hpp"

#include <cmath>
#include <numbers>

#include "copsd/errors.hpp"

namespace copsd {

std::vector<Array> zero_grads(const Model& model) {
  std::vector<Array> out;
  out.reserve(model.params.size());
  for (const auto& p : model.params) out.push_back(Array::zeros_like(p.value));
  return out;
}

void accumulate_grads(const Graph& graph, const BoundModel& bound, std::vector<Array>& grads, double weight) {
  if (grads.size() != bound.params.size()) throw DimensionError("gradient buffer count differs from bound parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!graph.has_grad(bound.params[i])) continue;
    const Array g = graph.grad(bound.params[i]);
    auto dst = grads[i].values();
    auto src = g.values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += weight * src[j];
  }
}

double grad_norm(const std::vector<Array>& grads) {
  double s = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values()) s += v * v;
  }
  return std::sqrt(s);
}

double clip_grad_norm(std::vector<Array>& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.values()) v *= f;
    }
  }
  return norm;
}

Var next_token_loss(const BoundModel& bound, std::span<const int> tokens) {
  if (tokens.size() < 2) throw ContractError("next-token loss needs at least two tokens");
  Var logits = forward(bound, tokens.first(tokens.size() - 1));
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  return scale(mean(pick(log_softmax(logits), targets)), -1.0);
}

double warmup_cosine_lr(double peak, int step, int warmup, int total, double min_frac) {
  if (warmup > 0 && step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  const double t = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  return peak * (min_frac + (1.0 - min_frac) * c);
}

}  // namespace copsd
