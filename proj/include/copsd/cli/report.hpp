// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "copsd/eval/evaluate.hpp"

namespace copsd {

// Method name whose records are the untrained starting point. They join
// every other method's trajectory of the same (run_id, dialect) as step 0.
inline const std::string kBaseMethod = "base";

struct TrajectoryKey {
  std::string run_id;
  std::string method;
  std::string dialect;
  friend auto operator<=>(const TrajectoryKey&, const TrajectoryKey&) = default;
};

// Records of one (run, method, dialect), indexed by step then budget.
using Trajectory = std::map<std::int64_t, std::map<int, MetricsRecord>>;

struct Report {
  int selection_budget = 0;  // smallest budget present
  std::vector<int> budgets;
  std::map<TrajectoryKey, Trajectory> trajectories;
  // Checkpoint chosen per trajectory: best pass@k at the selection budget
  // among trained steps (earliest on ties); step 0 when nothing was trained.
  std::map<TrajectoryKey, std::int64_t> selected;

  struct Cell {
    std::string method;
    std::string dialect;
    int budget = 0;
    double pass_at_k_pct = 0.0;
    double format_rate_pct = 0.0;
    double repeat4 = 0.0;
    int runs = 0;
    bool best = false;
  };
  std::vector<Cell> table;     // mean over runs of the selected checkpoints
  std::vector<Cell> averages;  // mean over the non-H dialects of `table`, dialect "avg"

  struct Correlation {
    std::string method;
    CorrelationReport report;
  };
  std::vector<Correlation> correlations;  // per trained method, at the selection budget
};

// ProtocolError when `records` is empty.
Report build_report(const std::vector<MetricsRecord>& records);
std::string report_csv(const Report& report);

// Every metrics CSV below `dir` (recursively, sorted by path).
std::vector<MetricsRecord> collect_metrics(const std::filesystem::path& dir);

// Self-contained SVG charts. Pure functions of their input.
struct PlotSet {
  std::vector<std::pair<std::string, std::string>> files;  // (file name, svg)
  std::vector<std::string> warnings;
};
PlotSet render_plots(const std::vector<MetricsRecord>& records);

}  // namespace copsd
