// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors
//
// Experiment driver: gen-corpus, pretrain, distill, grpo, eval, report, plot,
// plus `pipeline` which chains all of them.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "copsd/cli/commands.hpp"
#include "copsd/cli/pipeline.hpp"

using namespace copsd;

namespace {

std::vector<int> parse_budgets(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(item, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != item.size()) throw CLI::ValidationError("--budgets", "'" + item + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COPSD desk-scale laboratory"};
  app.require_subcommand(1);

  GenCorpusArgs gen;
  std::string gen_config;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Build the synthetic bilingual corpus");
  gen_cmd->add_option("--config", gen_config, "Corpus spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  PretrainArgs pre;
  std::string pre_config;
  auto* pre_cmd = app.add_subcommand("pretrain", "Train the base model with next-token cross-entropy");
  pre_cmd->add_option("--config", pre_config, "Pretraining config JSON")->check(CLI::ExistingFile);
  pre_cmd->add_option("--corpus", pre.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  pre_cmd->add_option("--out", pre.out, "Output directory")->required();

  TrainArgs dist, grpo;
  std::string dist_config, grpo_config, dist_corpus, grpo_corpus;
  auto add_train = [](CLI::App* cmd, TrainArgs& a, std::string& cfg, std::string& corpus) {
    cmd->add_option("--config", cfg, "Trainer config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--base", a.base, "Base checkpoint")->required();
    cmd->add_option("--dialect", a.dialect, "Low-resource dialect, e.g. L1")->required();
    cmd->add_option("--out", a.out, "Output directory")->required();
    cmd->add_option("--corpus", corpus, "Corpus directory (default: from the base manifest)");
  };
  auto* dist_cmd = app.add_subcommand("distill", "Crosslingual on-policy self-distillation");
  add_train(dist_cmd, dist, dist_config, dist_corpus);
  auto* grpo_cmd = app.add_subcommand("grpo", "Group-relative policy gradient baseline");
  add_train(grpo_cmd, grpo, grpo_config, grpo_corpus);

  EvalArgs ev;
  std::string budgets = "64,128,256", dump, method, run_id, vocab;
  std::uint64_t seed = 0;
  auto* ev_cmd = app.add_subcommand("eval", "Sample k completions per problem and append metrics");
  ev_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--eval", ev.eval_set, "Evaluation set (eval_<D>.jsonl)")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--budgets", budgets, "Comma-separated ascending budgets")->capture_default_str();
  ev_cmd->add_option("--k", ev.k, "Samples per problem")->capture_default_str();
  ev_cmd->add_option("--out", ev.out, "Metrics CSV to append to")->required();
  auto* dump_opt = ev_cmd->add_option("--dump", dump, "Generation dump JSONL");
  auto* seed_opt = ev_cmd->add_option("--seed", seed, "Sampling seed");
  auto* method_opt = ev_cmd->add_option("--method", method, "Method label (default: from the checkpoint manifest)");
  auto* run_opt = ev_cmd->add_option("--run-id", run_id, "Run id (default: from the checkpoint manifest)");
  auto* vocab_opt = ev_cmd->add_option("--vocab", vocab, "vocab.json (default: next to the eval set)");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Aggregate metrics CSVs into a report");
  rep_cmd->add_option("--runs", rep.runs, "Directory searched for metrics CSVs")->required();
  rep_cmd->add_option("--out", rep.out, "Report CSV")->required();

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Render SVG charts from a metrics CSV");
  plot_cmd->add_option("--metrics", plot.metrics, "Metrics CSV")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot.out, "Output directory")->required();

  std::string pipe_config, pipe_out;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run corpus, pretraining, both trainers, evaluation and reports");
  pipe_cmd->add_option("--config", pipe_config, "Pipeline config JSON")->check(CLI::ExistingFile);
  pipe_cmd->add_option("--out", pipe_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::kOk : exit_code::kUsage;
  }

  try {
    if (*gen_cmd) {
      if (!gen_config.empty()) gen.config = gen_config;
      cmd_gen_corpus(gen);
    } else if (*pre_cmd) {
      if (!pre_config.empty()) pre.config = pre_config;
      cmd_pretrain(pre, std::cerr);
    } else if (*dist_cmd) {
      if (!dist_config.empty()) dist.config = dist_config;
      if (!dist_corpus.empty()) dist.corpus = dist_corpus;
      cmd_distill(dist, std::cerr);
    } else if (*grpo_cmd) {
      if (!grpo_config.empty()) grpo.config = grpo_config;
      if (!grpo_corpus.empty()) grpo.corpus = grpo_corpus;
      cmd_grpo(grpo, std::cerr);
    } else if (*ev_cmd) {
      ev.budgets = parse_budgets(budgets);
      if (*dump_opt) ev.dump = dump;
      if (*seed_opt) ev.seed = seed;
      if (*method_opt) ev.method = method;
      if (*run_opt) ev.run_id = run_id;
      if (*vocab_opt) ev.vocab = vocab;
      cmd_eval(ev);
    } else if (*rep_cmd) {
      cmd_report(rep, std::cerr);
    } else if (*plot_cmd) {
      cmd_plot(plot, std::cerr);
    } else if (*pipe_cmd) {
      const auto cfg = pipe_config.empty() ? PipelineConfig{} : pipeline_config_from_json(read_json_file(pipe_config));
      const auto res = run_pipeline(cfg, pipe_out, std::cerr);
      std::cerr << "pipeline finished: " << res.records.size() << " metrics records\n";
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return exit_code::kUsage;
  } catch (...) {
    return report_exception(std::cerr);
  }
  return exit_code::kOk;
}
