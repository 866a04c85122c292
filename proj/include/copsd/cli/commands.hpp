// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace copsd {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kData = 3;
inline constexpr int kNumeric = 4;
}  // namespace exit_code

// Maps the exception in flight to an exit code and prints it to `err`.
int report_exception(std::ostream& err);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Hash over the listed files of a corpus directory, in a fixed order.
std::string corpus_hash(const std::filesystem::path& corpus_dir);

struct GenCorpusArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
};
void cmd_gen_corpus(const GenCorpusArgs& args);

struct PretrainArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path corpus;
  std::filesystem::path out;
};
// Writes base.ckpt, loss.csv and manifest.json.
void cmd_pretrain(const PretrainArgs& args, std::ostream& log);

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path base;
  std::string dialect;
  std::filesystem::path out;
  // Defaults to the corpus recorded in the base checkpoint's manifest.
  std::optional<std::filesystem::path> corpus;
};
// Writes ckpt_<step>.ckpt every checkpoint_every steps, steps.csv and
// manifest.json.
void cmd_distill(const TrainArgs& args, std::ostream& log);
void cmd_grpo(const TrainArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path ckpt;
  std::filesystem::path eval_set;
  std::vector<int> budgets = {64, 128, 256};
  int k = 12;
  std::filesystem::path out;
  std::optional<std::filesystem::path> dump;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> run_id;
  std::optional<std::filesystem::path> vocab;  // default: vocab.json next to the eval set
};
void cmd_eval(const EvalArgs& args);

struct ReportArgs {
  std::filesystem::path runs;
  std::filesystem::path out;
};
void cmd_report(const ReportArgs& args, std::ostream& log);

struct PlotArgs {
  std::filesystem::path metrics;
  std::filesystem::path out;
};
void cmd_plot(const PlotArgs& args, std::ostream& log);

}  // namespace copsd
