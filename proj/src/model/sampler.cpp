// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/model/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "copsd/errors.hpp"
#include "copsd/model/decoder.hpp"

namespace copsd {

void SamplingParams::validate() const {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ParameterError("top_p must lie in (0, 1]");
  if (budget < 1) throw ParameterError("budget must be at least 1");
}

std::vector<int> nucleus_keep(std::span<const double> probs, double top_p) {
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += probs[order[keep]];
    ++keep;
    if (mass >= top_p) break;
  }
  order.resize(std::max<std::size_t>(keep, 1));
  return order;
}

int sample_token(std::span<const double> logits, double temperature, double top_p, Rng& rng, double* logprob) {
  if (temperature < 1e-6) {
    const auto it = std::max_element(logits.begin(), logits.end());
    if (logprob) *logprob = 0.0;
    return static_cast<int>(it - logits.begin());
  }
  std::vector<double> probs(logits.size());
  softmax_row(logits, probs, temperature);
  if (top_p >= 1.0) {
    const double u = rng.uniform();
    double acc = 0.0;
    int chosen = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      chosen = static_cast<int>(i);
      acc += probs[i];
      if (u < acc) break;
    }
    if (logprob) *logprob = std::log(probs[static_cast<std::size_t>(chosen)]);
    return chosen;
  }
  const auto kept = nucleus_keep(probs, top_p);
  double mass = 0.0;
  for (int id : kept) mass += probs[id];
  const double u = rng.uniform() * mass;
  double acc = 0.0;
  int chosen = kept.back();
  for (int id : kept) {
    acc += probs[id];
    if (u < acc) {
      chosen = id;
      break;
    }
  }
  if (logprob) *logprob = std::log(probs[chosen] / mass);
  return chosen;
}

namespace {

void check_prompt(const Model& model, std::span<const int> prompt, const SamplingParams& params) {
  params.validate();
  check_tokens(model.config, prompt);
  if (prompt.size() + static_cast<std::size_t>(params.budget) > static_cast<std::size_t>(model.config.context_length)) {
    throw ContextError("prompt of " + std::to_string(prompt.size()) + " tokens plus budget " +
                       std::to_string(params.budget) + " exceeds context length " +
                       std::to_string(model.config.context_length));
  }
}

}  // namespace

Rollout sample_sequence(const Model& model, std::span<const int> prompt, const SamplingParams& params,
                        std::uint64_t seed) {
  auto out = sample_group(model, prompt, params, std::span<const std::uint64_t>(&seed, 1));
  return std::move(out.front());
}

namespace {

// Lockstep decoding of independent sequences whose prompts are already fed.
void decode_lockstep(const Decoder& decoder, const SamplingParams& params, std::vector<DecodeState>& states,
                     std::vector<std::vector<double>> first_rows, std::vector<Rollout>& rollouts) {
  const auto n = rollouts.size();
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rngs.emplace_back(rollouts[i].seed);

  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  Array logits;
  bool first_step = true;
  while (!active.empty()) {
    std::vector<std::size_t> still;
    std::vector<DecodeState*> feed_states;
    std::vector<int> feed_tokens;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto i = active[a];
      std::span<const double> row = first_step ? std::span<const double>(first_rows[i]) : logits.row(a);
      double lp = 0.0;
      const int tok = sample_token(row, params.temperature, params.top_p, rngs[i], &lp);
      auto& r = rollouts[i];
      r.tokens.push_back(tok);
      r.logprobs.push_back(lp);
      if (tok == params.eos_token) {
        r.terminated_by = Termination::kEos;
      } else if (r.tokens.size() >= static_cast<std::size_t>(params.budget)) {
        r.terminated_by = Termination::kBudget;
      } else {
        still.push_back(i);
        feed_states.push_back(&states[i]);
        feed_tokens.push_back(tok);
      }
    }
    first_step = false;
    active = std::move(still);
    if (!active.empty()) decoder.step(feed_states, feed_tokens, logits);
  }
}

}  // namespace

std::vector<Rollout> sample_group(const Model& model, std::span<const int> prompt, const SamplingParams& params,
                                  std::span<const std::uint64_t> seeds) {
  check_prompt(model, prompt, params);
  const Decoder decoder(model);
  DecodeState base = decoder.start();
  const auto first = decoder.prefill(base, prompt);

  const auto n = seeds.size();
  std::vector<Rollout> rollouts(n);
  for (std::size_t i = 0; i < n; ++i) {
    rollouts[i].prompt.assign(prompt.begin(), prompt.end());
    rollouts[i].seed = seeds[i];
  }
  std::vector<DecodeState> states(n, base);
  decode_lockstep(decoder, params, states, std::vector<std::vector<double>>(n, first), rollouts);
  return rollouts;
}

std::vector<Rollout> sample_batch(const Model& model, const std::vector<std::vector<int>>& prompts,
                                  const SamplingParams& params, std::span<const std::uint64_t> seeds) {
  if (prompts.size() != seeds.size()) throw DimensionError("sample_batch needs one seed per prompt");
  for (const auto& p : prompts) check_prompt(model, p, params);
  const Decoder decoder(model);
  const auto n = prompts.size();
  std::vector<Rollout> rollouts(n);
  std::vector<DecodeState> states;
  std::vector<std::vector<double>> first;
  states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rollouts[i].prompt = prompts[i];
    rollouts[i].seed = seeds[i];
    states.push_back(decoder.start());
    first.push_back(decoder.prefill(states.back(), prompts[i]));
  }
  decode_lockstep(decoder, params, states, std::move(first), rollouts);
  return rollouts;
}

}  // namespace copsd
