// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <span>
#include <vector>

#include "copsd/model/transformer.hpp"

namespace copsd {

// One zero array per parameter, in layout order.
std::vector<Array> zero_grads(const Model& model);

// grads[i] += weight * d(root)/d(param i) for the last backward() of the graph.
void accumulate_grads(const Graph& graph, const BoundModel& bound, std::vector<Array>& grads, double weight);

// Global L2 norm over all gradient arrays.
double grad_norm(const std::vector<Array>& grads);
// Rescales so the global norm is at most max_norm (no-op for max_norm <= 0).
// Returns the norm before clipping.
double clip_grad_norm(std::vector<Array>& grads, double max_norm);

// Mean next-token cross-entropy over positions 1..n-1 of a sequence.
Var next_token_loss(const BoundModel& bound, std::span<const int> tokens);

// Linear warmup then cosine decay to min_frac * peak at `total` steps.
double warmup_cosine_lr(double peak, int step, int warmup, int total, double min_frac);

}  // namespace copsd
