// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/distill/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "copsd/diffcore/adamw.hpp"
#include "copsd/diffcore/rng.hpp"
#include "copsd/errors.hpp"
#include "copsd/model/training.hpp"
#include "copsd/policies/policies.hpp"

namespace copsd {

double kl_divergence(std::span<const double> log_p, std::span<const double> log_q) {
  if (log_p.size() != log_q.size()) {
    throw DimensionError("kl_divergence widths differ: " + std::to_string(log_p.size()) + " vs " +
                         std::to_string(log_q.size()));
  }
  double s = 0.0;
  for (std::size_t v = 0; v < log_p.size(); ++v) {
    const double p = std::exp(log_p[v]);
    if (p == 0.0) continue;
    s += p * (log_p[v] - log_q[v]);
  }
  return std::max(0.0, s);
}

KlDirection kl_direction_from_string(const std::string& s) {
  if (s == "student-to-teacher") return KlDirection::kStudentToTeacher;
  if (s == "teacher-to-student") return KlDirection::kTeacherToStudent;
  throw ConfigError("kl_direction must be student-to-teacher or teacher-to-student, got '" + s + "'");
}

std::string to_string(KlDirection d) {
  return d == KlDirection::kStudentToTeacher ? "student-to-teacher" : "teacher-to-student";
}

StepDistributions step_distributions(const Model& student, const Model& teacher, std::span<const int> student_ctx,
                                     std::span<const int> teacher_ctx, std::span<const int> rollout) {
  return {step_distributions(student, student_ctx, rollout), step_distributions(teacher, teacher_ctx, rollout)};
}

double trajectory_divergence(const StepDistributions& d, KlDirection direction) {
  const std::size_t n = d.size();
  if (n == 0) return 0.0;
  if (d.teacher.rows() != n) throw DimensionError("student and teacher cover different numbers of positions");
  double s = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    s += direction == KlDirection::kStudentToTeacher ? kl_divergence(d.student.row(r), d.teacher.row(r))
                                                     : kl_divergence(d.teacher.row(r), d.student.row(r));
  }
  return s / static_cast<double>(n);
}

Var copsd_loss(const BoundModel& student, const BoundModel& teacher, std::span<const int> student_ctx,
               std::span<const int> teacher_ctx, std::span<const int> rollout, KlDirection direction) {
  if (rollout.empty()) throw ContractError("copsd_loss needs a non-empty rollout");
  Var s = rollout_logits(student, student_ctx, rollout);
  Var t = stop_gradient(rollout_logits(teacher, teacher_ctx, rollout));
  Var per_position = direction == KlDirection::kStudentToTeacher ? kl_rows(s, t) : kl_rows(t, s);
  return mean(per_position);
}

void DistillConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1 || rollout_budget < 1 || generations_per_prompt < 1 || total_steps < 1 || checkpoint_every < 1) {
    throw ConfigError("batch_size, rollout_budget, generations_per_prompt, total_steps and checkpoint_every must be positive");
  }
  if (!(rollout_temperature > 0.0)) throw ConfigError("rollout_temperature must be positive");
  if (weight_decay < 0.0 || grad_clip < 0.0) throw ConfigError("weight_decay and grad_clip must be non-negative");
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& what) {
  std::string unknown;
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      unknown += (unknown.empty() ? "" : ", ") + key;
    }
  }
  if (!unknown.empty()) throw ConfigError("unknown " + what + " keys: " + unknown);
}

}  // namespace

DistillConfig distill_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"lr", "batch_size", "rollout_budget", "rollout_temperature", "generations_per_prompt", "total_steps",
                  "checkpoint_every", "kl_direction", "seed", "weight_decay", "grad_clip", "wall_clock"},
                 "distill config");
  DistillConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.rollout_budget = j.value("rollout_budget", c.rollout_budget);
  c.rollout_temperature = j.value("rollout_temperature", c.rollout_temperature);
  c.generations_per_prompt = j.value("generations_per_prompt", c.generations_per_prompt);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("kl_direction")) c.kl_direction = kl_direction_from_string(j.at("kl_direction").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.wall_clock = j.value("wall_clock", c.wall_clock);
  c.validate();
  return c;
}

nlohmann::json to_json(const DistillConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"rollout_budget", c.rollout_budget},
          {"rollout_temperature", c.rollout_temperature},
          {"generations_per_prompt", c.generations_per_prompt},
          {"total_steps", c.total_steps},
          {"checkpoint_every", c.checkpoint_every},
          {"kl_direction", to_string(c.kl_direction)},
          {"seed", c.seed},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"wall_clock", c.wall_clock}};
}

std::uint64_t rollout_seed(std::uint64_t run_seed, int step, std::int64_t problem_id, int generation) {
  return derive_seed(run_seed, {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(problem_id),
                                static_cast<std::uint64_t>(generation)});
}

CyclicSampler::CyclicSampler(std::size_t n, std::uint64_t seed) : order_(n), seed_(seed) {
  if (n == 0) throw CorpusError("cannot draw batches from an empty set");
  reshuffle();
}

void CyclicSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(derive_seed(seed_, {0x5348u, epoch_++}));
  rng.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
}

std::vector<std::size_t> CyclicSampler::next(std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (cursor_ == order_.size()) reshuffle();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

DistillResult train_copsd(const Model& base, const Vocab& vocab, const std::vector<DistillRecord>& problems,
                          const std::string& dialect, const DistillConfig& config, const DistillHooks& hooks) {
  config.validate();
  if (problems.empty()) throw CorpusError("distillation set is empty");
  vocab.dialect_index(dialect);

  DistillResult out{base, base, {}};
  const Model& teacher = out.teacher;
  Model& student = out.student;
  AdamW opt({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  CyclicSampler sampler(problems.size(), config.seed);
  const SamplingParams params{config.rollout_temperature, 1.0, config.rollout_budget, tok::kEos};

  std::vector<PolicyContext> student_ctx, teacher_ctx;
  for (const auto& p : problems) {
    student_ctx.push_back(build_student_context(vocab, p, dialect));
    teacher_ctx.push_back(build_teacher_context(vocab, p, dialect));
  }

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 1; step <= config.total_steps; ++step) {
    const auto picks = sampler.next(static_cast<std::size_t>(config.batch_size));
    std::vector<std::vector<int>> prompts;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> owner;
    for (std::size_t i : picks) {
      for (int g = 0; g < config.generations_per_prompt; ++g) {
        prompts.push_back(student_ctx[i].tokens);
        seeds.push_back(rollout_seed(config.seed, step, problems[i].id, g));
        owner.push_back(i);
      }
    }
    auto rollouts = sample_batch(student, prompts, params, seeds);
    const auto policy_step = static_cast<std::int64_t>(opt.state().step);
    for (auto& r : rollouts) r.policy_step = policy_step;
    if (hooks.on_rollouts) hooks.on_rollouts(step, rollouts);

    DistillLogRow row;
    row.step = step;
    std::size_t live = 0;
    double total_len = 0.0;
    for (const auto& r : rollouts) {
      total_len += static_cast<double>(r.tokens.size());
      if (r.tokens.empty()) {
        ++row.zero_len_count;
      } else {
        ++live;
      }
    }
    row.mean_rollout_len = total_len / static_cast<double>(rollouts.size());

    if (live == 0) {
      if (hooks.on_warning) hooks.on_warning("step " + std::to_string(step) + ": every rollout is empty; step skipped");
    } else {
      auto grads = zero_grads(student);
      for (std::size_t r = 0; r < rollouts.size(); ++r) {
        const auto& ro = rollouts[r];
        if (ro.tokens.empty()) continue;
        if (ro.policy_step != static_cast<std::int64_t>(opt.state().step)) {
          throw TrainingError("rollout for problem " + std::to_string(problems[owner[r]].id) +
                              " was not sampled from the current student");
        }
        Graph g;
        auto sb = bind(g, student, true);
        auto tb = bind(g, teacher, false);
        Var loss = copsd_loss(sb, tb, student_ctx[owner[r]].tokens, teacher_ctx[owner[r]].tokens, ro.tokens,
                              config.kl_direction);
        const double v = loss.value().item();
        if (!std::isfinite(v)) {
          throw TrainingError("non-finite distillation loss at step " + std::to_string(step) + " on problem " +
                              std::to_string(problems[owner[r]].id));
        }
        g.backward(loss);
        accumulate_grads(g, sb, grads, 1.0 / static_cast<double>(live));
        row.loss += v / static_cast<double>(live);
      }
      clip_grad_norm(grads, config.grad_clip);
      opt.step(student.params, grads);
    }
    if (config.wall_clock) row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (step % config.checkpoint_every == 0 && hooks.on_checkpoint) hooks.on_checkpoint(step, student);
  }
  return out;
}

}  // namespace copsd
