// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "copsd/cli/report.hpp"
#include "json.hpp"

namespace copsd {

// Full experiment: one corpus, then per seed a base model, per dialect a
// COPSD and a GRPO run, evaluation of the base and of every eval_every-th
// checkpoint, and finally the report and plots.
struct PipelineConfig {
  nlohmann::json corpus = nlohmann::json::object();
  nlohmann::json pretrain = nlohmann::json::object();
  nlohmann::json distill = nlohmann::json::object();
  nlohmann::json grpo = nlohmann::json::object();
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> dialects;  // empty: every low-resource dialect
  int eval_every = 10;
  std::vector<int> budgets = {64, 128, 256};
  int k = 12;
  bool run_grpo = true;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);

struct PipelineResult {
  std::vector<MetricsRecord> records;
  Report report;
};

// Stages already completed under `out` (marked by a .done file) are reused.
// Layout: corpus/, seed<S>/{base,copsd_<D>,grpo_<D>}/, metrics/*.csv,
// metrics.csv (all records), report.csv, plots/.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out, std::ostream& log);

}  // namespace copsd
