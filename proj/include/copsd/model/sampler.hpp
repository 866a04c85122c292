// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "copsd/diffcore/rng.hpp"
#include "copsd/model/transformer.hpp"

namespace copsd {

enum class Termination { kEos, kBudget };

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int budget = 64;
  int eos_token = 1;

  void validate() const;
};

struct Rollout {
  std::vector<int> prompt;     // conditioning prefix, forced think prefix included
  std::vector<int> tokens;     // sampled tokens only
  std::vector<double> logprobs;  // log-probability of each sampled token under the sampling distribution
  Termination terminated_by = Termination::kBudget;
  std::uint64_t seed = 0;
  // Optimizer step of the parameters that produced this rollout (-1 = not stamped).
  std::int64_t policy_step = -1;
};

// Ids kept by nucleus truncation: sort by descending probability (ties by
// ascending id) and keep the shortest prefix whose mass reaches top_p.
// Always keeps at least one id.
std::vector<int> nucleus_keep(std::span<const double> probs, double top_p);

// Temperature below 1e-6 means greedy argmax (lowest id on ties).
int sample_token(std::span<const double> logits, double temperature, double top_p, Rng& rng, double* logprob);

Rollout sample_sequence(const Model& model, std::span<const int> prompt, const SamplingParams& params,
                        std::uint64_t seed);

// One rollout per seed from a shared prompt, decoded in lockstep. Each entry is
// identical to sample_sequence(model, prompt, params, seeds[i]).
std::vector<Rollout> sample_group(const Model& model, std::span<const int> prompt, const SamplingParams& params,
                                  std::span<const std::uint64_t> seeds);

// One rollout per (prompt, seed) pair, decoded in lockstep. Entry i is
// identical to sample_sequence(model, prompts[i], params, seeds[i]).
std::vector<Rollout> sample_batch(const Model& model, const std::vector<std::vector<int>>& prompts,
                                  const SamplingParams& params, std::span<const std::uint64_t> seeds);

}  // namespace copsd
