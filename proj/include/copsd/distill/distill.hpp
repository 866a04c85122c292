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

// KL(p || q) = sum_v exp(log_p[v]) (log_p[v] - log_q[v]); terms with
// p[v] = 0 contribute 0. Clamped at 0. DimensionError on width mismatch.
double kl_divergence(std::span<const double> log_p, std::span<const double> log_q);

enum class KlDirection {
  kStudentToTeacher,  // KL(p_S || p_T), reverse KL
  kTeacherToStudent,  // KL(p_T || p_S)
};

KlDirection kl_direction_from_string(const std::string& s);
std::string to_string(KlDirection d);

// Log-distributions of both policies over the positions of one rollout.
struct StepDistributions {
  Array student;  // [|y|×V], empty for an empty rollout
  Array teacher;
  std::size_t size() const { return student.empty() ? 0 : student.rows(); }
};

StepDistributions step_distributions(const Model& student, const Model& teacher, std::span<const int> student_ctx,
                                     std::span<const int> teacher_ctx, std::span<const int> rollout);

// Mean per-position divergence; 0 for an empty rollout.
double trajectory_divergence(const StepDistributions& d, KlDirection direction);

// Trajectory-averaged divergence as a graph scalar. Teacher logits pass
// through stop_gradient, so only the student receives gradients. The rollout
// must be non-empty.
Var copsd_loss(const BoundModel& student, const BoundModel& teacher, std::span<const int> student_ctx,
               std::span<const int> teacher_ctx, std::span<const int> rollout, KlDirection direction);

struct DistillConfig {
  double lr = 3e-4;
  int batch_size = 32;
  int rollout_budget = 128;
  double rollout_temperature = 1.1;
  int generations_per_prompt = 1;
  int total_steps = 100;
  int checkpoint_every = 5;
  KlDirection kl_direction = KlDirection::kStudentToTeacher;
  std::uint64_t seed = 11;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // 0 disables
  bool wall_clock = true;

  void validate() const;
};

DistillConfig distill_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DistillConfig& c);

struct DistillLogRow {
  int step = 0;
  double loss = 0.0;
  double mean_rollout_len = 0.0;
  int zero_len_count = 0;
  double seconds = 0.0;
};

struct DistillHooks {
  std::function<void(const DistillLogRow&)> on_step;
  // Called after optimizer step `step` (1-based) whenever it is a multiple
  // of checkpoint_every.
  std::function<void(int step, const Model& student)> on_checkpoint;
  std::function<void(const std::string&)> on_warning;
  // Sees every rollout of a step before it enters the loss.
  std::function<void(int step, const std::vector<Rollout>&)> on_rollouts;
};

struct DistillResult {
  Model student;
  Model teacher;  // the frozen copy, returned for inspection
  std::vector<DistillLogRow> log;
};

std::uint64_t rollout_seed(std::uint64_t run_seed, int step, std::int64_t problem_id, int generation);

// Teacher = frozen copy of `base`; student starts at `base`. Each step draws
// batch_size problems from a cyclic seeded shuffle, samples on-policy
// rollouts under the student context and applies one AdamW step to the mean
// trajectory loss.
DistillResult train_copsd(const Model& base, const Vocab& vocab, const std::vector<DistillRecord>& problems,
                          const std::string& dialect, const DistillConfig& config, const DistillHooks& hooks = {});

// Cyclic reshuffling batch sampler shared by the trainers.
class CyclicSampler {
 public:
  CyclicSampler(std::size_t n, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t count);

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  void reshuffle();
};

}  // namespace copsd
