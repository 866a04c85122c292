// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/cli/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "copsd/cli/commands.hpp"
#include "copsd/corpus/corpus.hpp"
#include "copsd/diffcore/rng.hpp"
#include "copsd/distill/distill.hpp"
#include "copsd/errors.hpp"
#include "copsd/eval/evaluate.hpp"
#include "copsd/grpo/grpo.hpp"

namespace copsd {

namespace fs = std::filesystem;

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"corpus", "pretrain", "distill", "grpo",    "seeds",
                                "dialects", "eval_every", "budgets", "k", "run_grpo"};
  std::string unknown;
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      unknown += (unknown.empty() ? "" : ", ") + key;
    }
  }
  if (!unknown.empty()) throw ConfigError("unknown pipeline config keys: " + unknown);
  PipelineConfig c;
  c.corpus = j.value("corpus", c.corpus);
  c.pretrain = j.value("pretrain", c.pretrain);
  c.distill = j.value("distill", c.distill);
  c.grpo = j.value("grpo", c.grpo);
  c.seeds = j.value("seeds", c.seeds);
  c.dialects = j.value("dialects", c.dialects);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.budgets = j.value("budgets", c.budgets);
  c.k = j.value("k", c.k);
  c.run_grpo = j.value("run_grpo", c.run_grpo);
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (c.eval_every < 1) throw ConfigError("eval_every must be positive");
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"corpus", c.corpus},         {"pretrain", c.pretrain}, {"distill", c.distill}, {"grpo", c.grpo},
          {"seeds", c.seeds},           {"dialects", c.dialects}, {"eval_every", c.eval_every},
          {"budgets", c.budgets},       {"k", c.k},               {"run_grpo", c.run_grpo}};
}

namespace {

bool done(const fs::path& dir) { return fs::exists(dir / ".done"); }
void mark_done(const fs::path& dir) { write_text_file(dir / ".done", ""); }

fs::path write_config(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  fs::create_directories(dir);
  const auto p = dir / name;
  write_text_file(p, j.dump(2) + "\n");
  return p;
}

// Evaluates `ckpts` on one dialect into metrics/<name>.csv, atomically.
void eval_stage(const fs::path& out, const std::string& name, const std::vector<fs::path>& ckpts,
                const fs::path& eval_set, const std::string& method, const std::string& run_id,
                const PipelineConfig& config, std::uint64_t seed, std::ostream& log) {
  const auto final_path = out / "metrics" / (name + ".csv");
  if (fs::exists(final_path)) return;
  fs::create_directories(out / "metrics");
  const auto tmp = out / "metrics" / (name + ".tmp");
  fs::remove(tmp);
  for (const auto& ck : ckpts) {
    EvalArgs e;
    e.ckpt = ck;
    e.eval_set = eval_set;
    e.budgets = config.budgets;
    e.k = config.k;
    e.out = tmp;
    e.seed = seed;
    e.method = method;
    e.run_id = run_id;
    cmd_eval(e);
  }
  fs::rename(tmp, final_path);
  log << "evaluated " << name << " (" << ckpts.size() << " checkpoints)\n";
}

std::vector<fs::path> selected_checkpoints(const fs::path& dir, int total_steps, int every, int eval_every) {
  std::vector<fs::path> out;
  for (int s = every; s <= total_steps; s += every) {
    if (s % eval_every != 0 && s != total_steps) continue;
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%05d.ckpt", s);
    out.push_back(dir / buf);
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  write_config(out, "pipeline.json", to_json(config));

  const auto corpus_dir = out / "corpus";
  if (!done(corpus_dir)) {
    GenCorpusArgs g{write_config(out / "configs", "corpus.json", config.corpus), corpus_dir};
    cmd_gen_corpus(g);
    mark_done(corpus_dir);
    log << "corpus written\n";
  }
  const Vocab vocab = load_vocab(corpus_dir / "vocab.json");
  std::vector<std::string> dialects = config.dialects;
  if (dialects.empty()) {
    for (int d = 1; d < vocab.n_dialects(); ++d) dialects.push_back(vocab.dialect_name(d));
  }

  for (std::uint64_t seed : config.seeds) {
    const std::string run_id = "seed" + std::to_string(seed);
    const auto sdir = out / run_id;
    const auto cfgdir = sdir / "configs";

    nlohmann::json pre = config.pretrain;
    pre["seed"] = derive_seed(seed, {1});
    if (!pre.contains("model")) pre["model"] = nlohmann::json::object();
    if (!pre["model"].contains("vocab_size")) pre["model"]["vocab_size"] = vocab.size();
    const auto base_dir = sdir / "base";
    if (!done(base_dir)) {
      PretrainArgs p{write_config(cfgdir, "pretrain.json", pre), corpus_dir, base_dir};
      cmd_pretrain(p, log);
      mark_done(base_dir);
    }
    const std::uint64_t eval_seed = derive_seed(seed, {4});
    const auto base_ckpt = base_dir / "base.ckpt";
    eval_stage(out, run_id + "_base_H", {base_ckpt}, corpus_dir / ("eval_" + vocab.dialect_name(0) + ".jsonl"),
               kBaseMethod, run_id, config, eval_seed, log);
    for (const auto& d : dialects) {
      eval_stage(out, run_id + "_base_" + d, {base_ckpt}, corpus_dir / ("eval_" + d + ".jsonl"), kBaseMethod, run_id,
                 config, eval_seed, log);
    }

    for (const auto& d : dialects) {
      nlohmann::json dc = config.distill;
      dc["seed"] = derive_seed(seed, {2});
      const auto dist_cfg = distill_config_from_json(dc);
      const auto ddir = sdir / ("copsd_" + d);
      if (!done(ddir)) {
        TrainArgs t{write_config(cfgdir, "distill.json", dc), base_ckpt, d, ddir, corpus_dir};
        cmd_distill(t, log);
        mark_done(ddir);
      }
      eval_stage(out, run_id + "_copsd_" + d,
                 selected_checkpoints(ddir, dist_cfg.total_steps, dist_cfg.checkpoint_every, config.eval_every),
                 corpus_dir / ("eval_" + d + ".jsonl"), "copsd", run_id, config, eval_seed, log);

      if (!config.run_grpo) continue;
      nlohmann::json gc = config.grpo;
      gc["seed"] = derive_seed(seed, {3});
      const auto grpo_cfg = grpo_config_from_json(gc);
      const auto gdir = sdir / ("grpo_" + d);
      if (!done(gdir)) {
        TrainArgs t{write_config(cfgdir, "grpo.json", gc), base_ckpt, d, gdir, corpus_dir};
        cmd_grpo(t, log);
        mark_done(gdir);
      }
      eval_stage(out, run_id + "_grpo_" + d,
                 selected_checkpoints(gdir, grpo_cfg.total_steps, grpo_cfg.checkpoint_every, config.eval_every),
                 corpus_dir / ("eval_" + d + ".jsonl"), "grpo", run_id, config, eval_seed, log);
    }
  }

  PipelineResult res;
  res.records = collect_metrics(out / "metrics");
  {
    std::string all = std::string(kMetricsHeader) + "\n";
    for (const auto& r : res.records) all += metrics_csv_row(r) + "\n";
    write_text_file(out / "metrics.csv", all);
  }
  cmd_report({out / "metrics", out / "report.csv"}, log);
  cmd_plot({out / "metrics.csv", out / "plots"}, log);
  res.report = build_report(res.records);
  return res;
}

}  // namespace copsd
