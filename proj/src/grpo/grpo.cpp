// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/grpo/grpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "copsd/diffcore/adamw.hpp"
#include "copsd/distill/distill.hpp"
#include "copsd/errors.hpp"
#include "copsd/eval/metrics.hpp"
#include "copsd/model/training.hpp"
#include "copsd/policies/policies.hpp"

namespace copsd {

int binary_reward(std::span<const int> generated, long gold) {
  const auto boxed = extract_boxed(generated);
  return boxed && *boxed == gold ? 1 : 0;
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw ConfigError("group size must be at least 2");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(rewards.size(), 0.0);
  if (sd < eps) return a;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (rewards[i] - mean) / sd;
  return a;
}

bool GroupResult::degenerate() const {
  return std::all_of(advantages.begin(), advantages.end(), [](double a) { return a == 0.0; });
}

Var grpo_step_loss(const BoundModel& policy, const std::vector<GroupResult>& groups, double temperature) {
  std::size_t live = 0;
  for (const auto& g : groups) {
    if (g.rollouts.size() != g.advantages.size()) throw DimensionError("group rollouts and advantages differ in count");
    for (const auto& r : g.rollouts) live += !r.tokens.empty();
  }
  Graph& graph = policy.params.front().graph();
  Var total;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto& r = g.rollouts[i];
      if (r.tokens.empty() || g.advantages[i] == 0.0) continue;
      Var lp = pick(log_softmax(rollout_logits(policy, r.prompt, r.tokens), temperature), r.tokens);
      Var term = scale(mean(lp), -g.advantages[i] / static_cast<double>(live));
      total = total.valid() ? add(total, term) : term;
    }
  }
  if (!total.valid()) return graph.constant(Array::scalar(0.0));
  return total;
}

void GrpoConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (batch_size < 1 || rollout_budget < 1 || total_steps < 1 || checkpoint_every < 1) {
    throw ConfigError("batch_size, rollout_budget, total_steps and checkpoint_every must be positive");
  }
  if (!(rollout_temperature > 0.0)) throw ConfigError("rollout_temperature must be positive");
  if (kl_coefficient < 0.0) throw ConfigError("kl_coefficient must be non-negative");
  if (kl_coefficient > 0.0) throw ConfigError("a reference-model KL penalty is not supported; set kl_coefficient to 0");
  if (!(advantage_eps > 0.0)) throw ConfigError("advantage_eps must be positive");
  if (weight_decay < 0.0 || grad_clip < 0.0) throw ConfigError("weight_decay and grad_clip must be non-negative");
}

GrpoConfig grpo_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"lr",           "batch_size",     "group_size",    "rollout_budget", "rollout_temperature",
                                "total_steps",  "checkpoint_every", "kl_coefficient", "advantage_eps", "seed",
                                "weight_decay", "grad_clip",      "wall_clock"};
  std::string unknown;
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      unknown += (unknown.empty() ? "" : ", ") + key;
    }
  }
  if (!unknown.empty()) throw ConfigError("unknown grpo config keys: " + unknown);
  GrpoConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.group_size = j.value("group_size", c.group_size);
  c.rollout_budget = j.value("rollout_budget", c.rollout_budget);
  c.rollout_temperature = j.value("rollout_temperature", c.rollout_temperature);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.kl_coefficient = j.value("kl_coefficient", c.kl_coefficient);
  c.advantage_eps = j.value("advantage_eps", c.advantage_eps);
  c.seed = j.value("seed", c.seed);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.wall_clock = j.value("wall_clock", c.wall_clock);
  c.validate();
  return c;
}

nlohmann::json to_json(const GrpoConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"group_size", c.group_size},
          {"rollout_budget", c.rollout_budget},
          {"rollout_temperature", c.rollout_temperature},
          {"total_steps", c.total_steps},
          {"checkpoint_every", c.checkpoint_every},
          {"kl_coefficient", c.kl_coefficient},
          {"advantage_eps", c.advantage_eps},
          {"seed", c.seed},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"wall_clock", c.wall_clock}};
}

GrpoResult train_grpo(const Model& base, const Vocab& vocab, const std::vector<DistillRecord>& problems,
                      const std::string& dialect, const GrpoConfig& config, const GrpoHooks& hooks) {
  config.validate();
  if (problems.empty()) throw CorpusError("training set is empty");
  vocab.dialect_index(dialect);

  GrpoResult out{base, {}};
  Model& policy = out.policy;
  AdamW opt({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  CyclicSampler sampler(problems.size(), config.seed);
  const SamplingParams params{config.rollout_temperature, 1.0, config.rollout_budget, tok::kEos};
  std::vector<PolicyContext> ctx;
  for (const auto& p : problems) ctx.push_back(build_student_context(vocab, p, dialect));

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 1; step <= config.total_steps; ++step) {
    const auto picks = sampler.next(static_cast<std::size_t>(config.batch_size));
    std::vector<GroupResult> groups;
    std::size_t degenerate = 0;
    double reward_sum = 0.0;
    for (std::size_t i : picks) {
      std::vector<std::uint64_t> seeds;
      for (int g = 0; g < config.group_size; ++g) seeds.push_back(rollout_seed(config.seed, step, problems[i].id, g));
      GroupResult gr;
      gr.prompt_id = problems[i].id;
      gr.rollouts = sample_group(policy, ctx[i].tokens, params, seeds);
      for (auto& r : gr.rollouts) {
        r.policy_step = static_cast<std::int64_t>(opt.state().step);
        gr.rewards.push_back(binary_reward(r.tokens, problems[i].answer));
        reward_sum += gr.rewards.back();
      }
      gr.advantages = group_advantages(gr.rewards, config.advantage_eps);
      degenerate += gr.degenerate();
      groups.push_back(std::move(gr));
    }
    if (hooks.on_groups) hooks.on_groups(step, groups);

    GrpoLogRow row;
    row.step = step;
    row.mean_reward = reward_sum / static_cast<double>(config.batch_size * config.group_size);
    row.degenerate_group_frac = static_cast<double>(degenerate) / static_cast<double>(groups.size());
    if (degenerate < groups.size()) {
      auto grads = zero_grads(policy);
      std::size_t live = 0;
      for (const auto& g : groups) {
        for (const auto& r : g.rollouts) live += !r.tokens.empty();
      }
      // One graph per group keeps memory bounded; weights reproduce the
      // joint normalization of grpo_step_loss.
      for (const auto& g : groups) {
        if (g.degenerate()) continue;
        Graph graph;
        auto bound = bind(graph, policy, true);
        Var loss = grpo_step_loss(bound, {g}, config.rollout_temperature);
        std::size_t group_live = 0;
        for (const auto& r : g.rollouts) group_live += !r.tokens.empty();
        const double w = static_cast<double>(group_live) / static_cast<double>(live);
        const double v = loss.value().item() * w;
        if (!std::isfinite(v)) {
          throw TrainingError("non-finite policy-gradient loss at step " + std::to_string(step) + " on group " +
                              std::to_string(g.prompt_id));
        }
        row.loss += v;
        if (!graph.requires_grad(loss)) continue;
        graph.backward(loss);
        accumulate_grads(graph, bound, grads, w);
      }
      clip_grad_norm(grads, config.grad_clip);
      opt.step(policy.params, grads);
    }
    if (config.wall_clock) row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (step % config.checkpoint_every == 0 && hooks.on_checkpoint) hooks.on_checkpoint(step, policy);
  }
  return out;
}

}  // namespace copsd
