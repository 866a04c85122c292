// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include <cmath>
#include <numeric>

#include "copsd/corpus/corpus.hpp"
#include "copsd/errors.hpp"
#include "copsd/grpo/grpo.hpp"
#include "copsd/model/checkpoint.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace copsd;

namespace {

Model tiny_model(std::uint64_t seed, double jitter = 0.0) {
  ModelConfig mc;
  mc.vocab_size = 114;
  mc.context_length = 64;
  mc.d_model = 8;
  mc.n_heads = 2;
  mc.d_ffn = 16;
  mc.n_layers = 2;
  auto m = init_model(mc, seed);
  Rng rng(seed + 1);
  for (auto& p : m.params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += jitter * rng.normal();
  }
  return m;
}

Rollout make_rollout(std::vector<int> prompt, std::vector<int> tokens) {
  Rollout r;
  r.prompt = std::move(prompt);
  r.tokens = std::move(tokens);
  return r;
}

// Mean log-probability of a rollout recomputed token by token.
double mean_logprob(const Model& m, const Rollout& r, double temperature) {
  std::vector<int> seq = r.prompt;
  double s = 0;
  for (int t : r.tokens) {
    const auto lp = log_softmax(forward_logits(m, seq), temperature);
    s += lp.at(seq.size() - 1, static_cast<std::size_t>(t));
    seq.push_back(t);
  }
  return s / static_cast<double>(r.tokens.size());
}

std::vector<DistillRecord> l1_records() {
  CorpusSpec s;
  s.pretrain_h = 10;
  s.pretrain_l_per_dialect = 1;
  s.parallel_per_dialect = 1;
  s.distill_per_dialect = 8;
  s.eval_per_dialect = 2;
  std::vector<DistillRecord> out;
  for (const auto& r : generate_corpus(s).distill) {
    if (r.dialect == "L1") out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("binary reward") {
  const std::vector<int> ok = {30, tok::kThinkClose, tok::kBoxOpen, tok::kDigit0 + 7, tok::kBoxClose, tok::kEos};
  CHECK(binary_reward(ok, 7) == 1);
  CHECK(binary_reward(ok, 8) == 0);
  const std::vector<int> none = {30, tok::kDigit0 + 7, tok::kEos};
  CHECK(binary_reward(none, 7) == 0);
  const std::vector<int> eight = {tok::kBoxOpen, tok::kDigit0 + 8, tok::kBoxClose};
  CHECK(binary_reward(eight, 7) == 0);
  CHECK(binary_reward(std::vector<int>{}, 0) == 0);
}

TEST_CASE("group advantages closed form") {
  const std::vector<double> r = {1, 1, 0, 0, 0, 0, 0, 0};
  const auto a = group_advantages(r);
  // mean 1/4, population std sqrt(3)/4.
  for (int i = 0; i < 2; ++i) CHECK(std::abs(a[i] - std::sqrt(3.0)) <= 1e-4);
  for (int i = 2; i < 8; ++i) CHECK(std::abs(a[i] + 1 / std::sqrt(3.0)) <= 1e-4);
  CHECK(std::abs(a[0] - 1.7321) <= 1e-4);
  CHECK(std::abs(a[2] + 0.5774) <= 1e-4);
  const std::vector<double> same = {1, 1, 1};
  for (double v : group_advantages(same)) CHECK(v == 0.0);
  const std::vector<double> one = {1};
  CHECK_THROWS_AS(group_advantages(one), ConfigError);
}

TEST_CASE("property: non-degenerate advantages are centred with unit population variance") {
  Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> r(2 + rng.below(14));
    for (auto& v : r) v = static_cast<double>(rng.below(2));
    const auto a = group_advantages(r);
    const bool all_same = std::all_of(r.begin(), r.end(), [&](double v) { return v == r[0]; });
    if (all_same) {
      for (double v : a) CHECK(v == 0.0);
      continue;
    }
    const double sum = std::accumulate(a.begin(), a.end(), 0.0);
    double sq = 0;
    for (double v : a) sq += v * v;
    CHECK(std::abs(sum) <= 1e-9);
    CHECK(std::abs(sq / static_cast<double>(a.size()) - 1.0) <= 1e-9);
  }
}

TEST_CASE("step loss scalar oracle for A = [+1, -1]") {
  const auto m = tiny_model(1, 0.3);
  GroupResult g;
  g.rollouts = {make_rollout({0, 30, 31}, {40, 9}), make_rollout({0, 30, 31}, {12, 1})};
  g.advantages = {1.0, -1.0};
  Graph graph;
  auto bound = bind(graph, m, true);
  const double loss = grpo_step_loss(bound, {g}).value().item();
  const double expect = -(mean_logprob(m, g.rollouts[0], 1.0) - mean_logprob(m, g.rollouts[1], 1.0)) / 2.0;
  CHECK(std::abs(loss - expect) <= 1e-12);

  Graph graph2;
  auto bound2 = bind(graph2, m, true);
  const double hot = grpo_step_loss(bound2, {g}, 1.2).value().item();
  const double expect_hot = -(mean_logprob(m, g.rollouts[0], 1.2) - mean_logprob(m, g.rollouts[1], 1.2)) / 2.0;
  CHECK(std::abs(hot - expect_hot) <= 1e-12);
}

TEST_CASE("empty rollouts count neither in the sum nor the denominator") {
  const auto m = tiny_model(2, 0.3);
  GroupResult g;
  g.rollouts = {make_rollout({0, 30}, {40, 9}), make_rollout({0, 30}, {}), make_rollout({0, 30}, {12})};
  g.advantages = {0.5, 2.0, -1.5};
  Graph graph;
  auto bound = bind(graph, m, true);
  const double loss = grpo_step_loss(bound, {g}).value().item();
  const double expect = -(0.5 * mean_logprob(m, g.rollouts[0], 1.0) - 1.5 * mean_logprob(m, g.rollouts[2], 1.0)) / 2.0;
  CHECK(std::abs(loss - expect) <= 1e-12);
}

TEST_CASE("all-zero advantages give zero loss and zero gradient") {
  const auto m = tiny_model(3, 0.3);
  GroupResult g;
  g.rollouts = {make_rollout({0, 30}, {40, 9}), make_rollout({0, 30}, {12})};
  g.advantages = {0.0, 0.0};
  CHECK(g.degenerate());
  Graph graph;
  auto bound = bind(graph, m, true);
  auto loss = grpo_step_loss(bound, {g});
  CHECK(loss.value().item() == 0.0);
  graph.backward(loss);
  for (const auto& v : bound.params) {
    const auto gr = graph.grad(v);
    for (std::size_t i = 0; i < gr.size(); ++i) REQUIRE(gr[i] == 0.0);
  }
}

TEST_CASE("step loss gradient matches finite differences") {
  auto m = tiny_model(4, 0.3);
  GroupResult g;
  g.rollouts = {make_rollout({0, 30, 31}, {40, 9, 1}), make_rollout({0, 30, 31}, {12}),
                make_rollout({0, 30, 31}, {50, 50})};
  g.advantages = group_advantages(std::vector<double>{1, 0, 0});
  for (const auto* name : {"wte", "h1.mlp.w1", "lnf.b"}) {
    CAPTURE(name);
    std::size_t idx = 0;
    while (idx < m.params.size() && m.params[idx].name != name) ++idx;
    REQUIRE(idx < m.params.size());
    Graph graph;
    auto bound = bind(graph, m, true);
    graph.backward(grpo_step_loss(bound, {g}, 1.2));
    const auto analytic = graph.grad(bound.params[idx]);
    std::vector<Array> xs = {m.params[idx].value};
    const auto numeric = oracle::numeric_grads(xs, [&] {
      m.params[idx].value = xs[0];
      Graph h;
      auto b = bind(h, m, true);
      return grpo_step_loss(b, {g}, 1.2).value().item();
    });
    m.params[idx].value = xs[0];
    CHECK(oracle::max_rel_err(analytic, numeric[0], 1e-4) <= 1e-4);
  }
}

TEST_CASE("config defaults and validation") {
  GrpoConfig c;
  CHECK(c.group_size == 8);
  CHECK(c.rollout_temperature == 1.2);
  CHECK(c.kl_coefficient == 0.0);
  CHECK(c.total_steps == 500);
  CHECK(c.checkpoint_every == 5);
  auto bad = c;
  bad.group_size = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.kl_coefficient = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.kl_coefficient = 0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const auto j = to_json(c);
  CHECK(to_json(grpo_config_from_json(j)) == j);
  auto unknown = j;
  unknown["clip"] = 0.2;
  CHECK_THROWS_AS(grpo_config_from_json(unknown), ConfigError);
}

TEST_CASE("all-degenerate steps leave parameters byte-identical; logged rewards re-verify") {
  const auto records = l1_records();
  const auto base = tiny_model(5);
  const Vocab vocab(3);
  GrpoConfig c;
  c.batch_size = 2;
  c.group_size = 4;
  c.rollout_budget = 8;
  c.total_steps = 3;
  c.checkpoint_every = 1;
  c.lr = 0.1;
  c.wall_clock = false;
  std::vector<double> rescored;
  GrpoHooks hooks;
  hooks.on_groups = [&](int, const std::vector<GroupResult>& groups) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& g : groups) {
      const auto& rec = *std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == g.prompt_id; });
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        CHECK(g.rewards[i] == binary_reward(g.rollouts[i].tokens, rec.answer));
        s += binary_reward(g.rollouts[i].tokens, rec.answer);
        ++n;
      }
    }
    rescored.push_back(s / static_cast<double>(n));
  };
  const auto out = train_grpo(base, vocab, records, "L1", c, hooks);
  REQUIRE(out.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.log[i].mean_reward == rescored[i]);
    // An untrained model never produces the boxed gold answer.
    CHECK(out.log[i].degenerate_group_frac == 1.0);
    CHECK(out.log[i].loss == 0.0);
  }
  CHECK(encode_checkpoint(out.policy, 0) == encode_checkpoint(base, 0));
  const auto again = train_grpo(base, vocab, records, "L1", c);
  CHECK(encode_checkpoint(again.policy, 0) == encode_checkpoint(out.policy, 0));
}

TEST_CASE("train_grpo updates only on informative groups and is deterministic") {
  const auto records = l1_records();
  const auto base = tiny_model(6, 0.5);
  const Vocab vocab(3);
  GrpoConfig c;
  c.batch_size = 2;
  c.group_size = 4;
  c.rollout_budget = 6;
  c.total_steps = 2;
  c.checkpoint_every = 1;
  c.wall_clock = false;
  std::vector<int> informative;
  GrpoHooks hooks;
  hooks.on_groups = [&](int, const std::vector<GroupResult>& groups) {
    int n = 0;
    for (const auto& g : groups) n += !g.degenerate();
    informative.push_back(n);
  };
  // Parameters move iff some step had an informative group.
  const auto out = train_grpo(base, vocab, records, "L1", c, hooks);
  const bool any_live = std::any_of(informative.begin(), informative.end(), [](int n) { return n > 0; });
  CHECK((encode_checkpoint(out.policy, 0) != encode_checkpoint(base, 0)) == any_live);
  const auto again = train_grpo(base, vocab, records, "L1", c);
  CHECK(encode_checkpoint(again.policy, 0) == encode_checkpoint(out.policy, 0));
}
