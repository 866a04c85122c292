// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "copsd/corpus/corpus.hpp"
#include "copsd/model/transformer.hpp"
#include "json.hpp"

namespace copsd {

struct PretrainConfig {
  ModelConfig model;
  std::uint64_t seed = 7;
  int steps = 2000;
  int batch_size = 16;  // documents per step
  double lr = 2e-3;
  int warmup_steps = 100;
  double min_lr_frac = 0.1;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  // corpus_hash() of the corpus directory the run must see; empty disables
  // the check.
  std::string expected_corpus_hash;
  bool wall_clock = true;  // false writes 0 in the seconds column

  void validate() const;
};

PretrainConfig pretrain_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PretrainConfig& c);

struct PretrainLogRow {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct PretrainResult {
  Model model;
  std::vector<PretrainLogRow> log;
};

// Next-token cross-entropy over whole documents. Each epoch visits the
// documents in a fresh seeded shuffle.
PretrainResult train_pretrain(const std::vector<PretrainDoc>& docs, const PretrainConfig& config,
                              const std::function<void(const PretrainLogRow&)>& on_step = {});

}  // namespace copsd
