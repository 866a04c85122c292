// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "copsd/corpus/corpus.hpp"
#include "copsd/eval/metrics.hpp"
#include "copsd/model/transformer.hpp"

namespace copsd {

struct MetricsRecord {
  std::string run_id;
  std::string method;
  std::string dialect;
  std::int64_t step = 0;
  int budget = 0;
  int k = 0;
  double pass_at_k_pct = 0.0;
  double format_rate_pct = 0.0;
  std::array<double, 5> repeat{};  // n = 2..6
  double lang_consistency = 0.0;
  double mean_gen_len = 0.0;
};

struct EvalConfig {
  int k = 12;
  double temperature = 1.0;
  double top_p = 0.95;
  std::vector<int> budgets = {64, 128, 256};
  std::uint64_t seed = 2024;
  int threads = 0;  // 0: COPSD_THREADS, else hardware concurrency

  // Throws ConfigError for k < 1 or budgets empty / not strictly ascending.
  void validate() const;
};

// One generation as written to the dump.
struct Generation {
  std::int64_t problem_id = 0;
  int sample_idx = 0;
  std::uint64_t seed = 0;
  int budget = 0;
  std::vector<int> tokens;
  std::optional<long> boxed;
  bool correct = false;
};

struct EvalResult {
  std::vector<MetricsRecord> records;  // one per budget, ascending
  std::vector<Generation> generations;  // budget-major, then problem, then sample
};

// Samples k completions per problem from the student context and scores
// them at every budget. Each sample is generated once at the largest budget;
// a smaller budget sees its first `budget` tokens, which is exactly what a
// separate run with that budget and the same seed would produce.
EvalResult evaluate(const Model& model, const Vocab& vocab, const std::vector<EvalRecord>& problems,
                    const std::string& dialect, const EvalConfig& config, const std::string& run_id,
                    const std::string& method, std::int64_t step);

// Recomputes one budget's record from stored generations.
MetricsRecord score_generations(const Vocab& vocab, const std::vector<Generation>& generations, int dialect,
                                int budget, int k, const std::vector<EvalRecord>& problems);

// Threads allowed for evaluation: COPSD_THREADS if set and positive, else
// the hardware concurrency (at least 1).
int eval_threads();

std::uint64_t sample_seed(std::uint64_t seed, std::int64_t problem_id, int sample_idx);

// ---- files -------------------------------------------------------------------

extern const char* const kMetricsHeader;
std::string metrics_csv_row(const MetricsRecord& r);
// Appends rows, writing the header first when the file is new or empty.
void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
// Throws CorpusError naming the line on a malformed row. Empty metric cells
// read as NaN.
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

void write_generations_jsonl(const std::filesystem::path& path, const std::vector<Generation>& generations);
std::vector<Generation> read_generations_jsonl(const std::filesystem::path& path);

// ---- correlations ------------------------------------------------------------

struct CorrelationReport {
  struct PerDialect {
    std::string dialect;
    std::size_t points = 0;
    double pearson = 0.0;
    double spearman = 0.0;
  };
  std::vector<PerDialect> dialects;
  double pearson_mean = 0.0;
  double spearman_mean = 0.0;
  double pearson_pool = 0.0;
  double spearman_pool = 0.0;
  std::vector<std::string> warnings;
};

// Format rate vs pass@k over training-step trajectories. Each dialect's
// records form one trajectory; dialects with fewer than two points or zero
// variance are skipped with a warning. Pooled coefficients use every
// retained (dialect, step) point.
CorrelationReport correlation_report(const std::vector<MetricsRecord>& records);

}  // namespace copsd
