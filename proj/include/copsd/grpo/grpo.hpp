// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "copsd/corpus/corpus.hpp"
#include "copsd/model/sampler.hpp"
#include "copsd/model/transformer.hpp"
#include "json.hpp"

namespace copsd {

// 1 iff the generated tokens hold a boxed integer equal to gold.
int binary_reward(std::span<const int> generated, long gold);

// (r - mean) / population std; all zeros when std < eps. ConfigError for
// fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double eps = 1e-8);

struct GroupResult {
  std::int64_t prompt_id = 0;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  std::vector<double> advantages;

  bool degenerate() const;
};

// -(1/N) sum_i A_i * mean_t log pi(y_it | prefix) over the N non-empty
// rollouts of all groups, with pi the temperature-scaled policy. Returns a
// constant 0 when no rollout carries a non-zero advantage.
Var grpo_step_loss(const BoundModel& policy, const std::vector<GroupResult>& groups, double temperature = 1.0);

struct GrpoConfig {
  double lr = 3e-4;
  int batch_size = 4;  // prompts per step
  int group_size = 8;
  int rollout_budget = 128;
  double rollout_temperature = 1.2;
  int total_steps = 500;
  int checkpoint_every = 5;
  double kl_coefficient = 0.0;
  double advantage_eps = 1e-8;
  std::uint64_t seed = 13;
  double weight_decay = 0.0;
  double grad_clip = 0.0;
  bool wall_clock = true;

  void validate() const;
};

GrpoConfig grpo_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GrpoConfig& c);

struct GrpoLogRow {
  int step = 0;
  double mean_reward = 0.0;
  double degenerate_group_frac = 0.0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct GrpoHooks {
  std::function<void(const GrpoLogRow&)> on_step;
  std::function<void(int step, const Model& policy)> on_checkpoint;
  std::function<void(int step, const std::vector<GroupResult>&)> on_groups;
};

struct GrpoResult {
  Model policy;
  std::vector<GrpoLogRow> log;
};

// One on-policy update per sampled batch; a step whose groups are all
// degenerate leaves parameters and optimizer state untouched.
GrpoResult train_grpo(const Model& base, const Vocab& vocab, const std::vector<DistillRecord>& problems,
                      const std::string& dialect, const GrpoConfig& config, const GrpoHooks& hooks = {});

}  // namespace copsd
