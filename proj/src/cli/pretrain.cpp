// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/cli/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "copsd/diffcore/adamw.hpp"
#include "copsd/diffcore/rng.hpp"
#include "copsd/errors.hpp"
#include "copsd/model/training.hpp"

namespace copsd {

void PretrainConfig::validate() const {
  model.validate();
  if (steps < 1 || batch_size < 1) throw ConfigError("steps and batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (min_lr_frac < 0.0 || min_lr_frac > 1.0) throw ConfigError("min_lr_frac must lie in [0, 1]");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"model",        "seed",         "steps",     "batch_size",
                                "lr",           "warmup_steps", "min_lr_frac", "weight_decay",
                                "grad_clip",    "expected_corpus_hash", "wall_clock"};
  std::string unknown;
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      unknown += (unknown.empty() ? "" : ", ") + key;
    }
  }
  if (!unknown.empty()) throw ConfigError("unknown pretrain config keys: " + unknown);
  PretrainConfig c;
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  c.seed = j.value("seed", c.seed);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.min_lr_frac = j.value("min_lr_frac", c.min_lr_frac);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.expected_corpus_hash = j.value("expected_corpus_hash", c.expected_corpus_hash);
  c.wall_clock = j.value("wall_clock", c.wall_clock);
  c.validate();
  return c;
}

nlohmann::json to_json(const PretrainConfig& c) {
  return {{"model", c.model},
          {"seed", c.seed},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"min_lr_frac", c.min_lr_frac},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"expected_corpus_hash", c.expected_corpus_hash},
          {"wall_clock", c.wall_clock}};
}

PretrainResult train_pretrain(const std::vector<PretrainDoc>& docs, const PretrainConfig& config,
                              const std::function<void(const PretrainLogRow&)>& on_step) {
  config.validate();
  if (docs.empty()) throw CorpusError("pretraining corpus is empty");
  for (const auto& d : docs) {
    if (d.tokens.size() < 2) throw CorpusError("document " + std::to_string(d.id) + " has fewer than two tokens");
    check_tokens(config.model, d.tokens);
  }

  PretrainResult out{init_model(config.model, derive_seed(config.seed, {0})), {}};
  Model& model = out.model;
  AdamW opt({config.lr, 0.9, 0.95, 1e-8, config.weight_decay});
  Rng order_rng(derive_seed(config.seed, {1}));
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  order_rng.shuffle(order.begin(), order.end());
  std::size_t cursor = 0;

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < config.steps; ++step) {
    auto grads = zero_grads(model);
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const auto& doc = docs[order[cursor++]];
      Graph g;
      auto bound = bind(g, model, true);
      Var l = next_token_loss(bound, doc.tokens);
      g.backward(l);
      accumulate_grads(g, bound, grads, 1.0 / config.batch_size);
      loss += l.value().item() / config.batch_size;
    }
    if (!std::isfinite(loss)) throw TrainingError("pretraining loss is not finite at step " + std::to_string(step));
    clip_grad_norm(grads, config.grad_clip);
    const double lr = warmup_cosine_lr(config.lr, step, config.warmup_steps, config.steps, config.min_lr_frac);
    opt.config().lr = lr;
    opt.step(model.params, grads);
    PretrainLogRow row{step, loss, lr, 0.0};
    if (config.wall_clock) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    out.log.push_back(row);
    if (on_step) on_step(row);
  }
  return out;
}

}  // namespace copsd
