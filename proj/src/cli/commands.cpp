// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "copsd/cli/pretrain.hpp"
#include "copsd/cli/report.hpp"
#include "copsd/corpus/corpus.hpp"
#include "copsd/distill/distill.hpp"
#include "copsd/errors.hpp"
#include "copsd/eval/evaluate.hpp"
#include "copsd/grpo/grpo.hpp"
#include "copsd/model/checkpoint.hpp"

namespace copsd {

namespace fs = std::filesystem;

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::kUsage;
  } catch (const TrainingError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return exit_code::kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kData;
  } catch (const nlohmann::json::exception& e) {
    err << "malformed JSON: " << e.what() << '\n';
    return exit_code::kData;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << '\n';
    return exit_code::kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kData;
  }
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

const char* const kCorpusFiles[] = {"pretrain.jsonl", "distill.jsonl", "eval.jsonl", "vocab.json"};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

nlohmann::json manifest_base(const std::string& subcommand, const fs::path& out, nlohmann::json config) {
  return {{"run_id", fs::absolute(out).lexically_normal().filename().string()},
          {"subcommand", subcommand},
          {"config", std::move(config)},
          {"started_at", utc_now()}};
}

void finish_manifest(nlohmann::json& m, const fs::path& out) {
  m["finished_at"] = utc_now();
  write_text_file(out / "manifest.json", m.dump(2) + "\n");
}

std::optional<nlohmann::json> manifest_next_to(const fs::path& file) {
  const auto p = file.parent_path() / "manifest.json";
  if (!fs::exists(p)) return std::nullopt;
  return read_json_file(p);
}

std::string csv_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string ckpt_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%05d.ckpt", step);
  return buf;
}

}  // namespace

std::string corpus_hash(const fs::path& corpus_dir) {
  std::vector<std::uint8_t> all;
  for (const char* name : kCorpusFiles) {
    const auto h = file_hash(corpus_dir / name);
    all.insert(all.end(), name, name + std::strlen(name));
    all.insert(all.end(), h.begin(), h.end());
  }
  return fnv1a_hex(all);
}

void cmd_gen_corpus(const GenCorpusArgs& args) {
  const nlohmann::json cfg = args.config ? read_json_file(*args.config) : nlohmann::json::object();
  const CorpusSpec spec = corpus_spec_from_json(cfg);
  build_corpus(spec, args.out);
  auto m = manifest_base("gen-corpus", args.out, to_json(spec));
  m["corpus_hash"] = corpus_hash(args.out);
  nlohmann::json files = nlohmann::json::object();
  for (const auto& e : fs::directory_iterator(args.out)) {
    if (e.path().extension() == ".jsonl" || e.path().filename() == "vocab.json") {
      files[e.path().filename().string()] = file_hash(e.path());
    }
  }
  m["files"] = files;
  finish_manifest(m, args.out);
}

void cmd_pretrain(const PretrainArgs& args, std::ostream& log) {
  const nlohmann::json cfg = args.config ? read_json_file(*args.config) : nlohmann::json::object();
  PretrainConfig config = pretrain_config_from_json(cfg);
  const auto hash = corpus_hash(args.corpus);
  if (!config.expected_corpus_hash.empty() && config.expected_corpus_hash != hash) {
    throw IntegrityError("corpus hash " + hash + " does not match expected " + config.expected_corpus_hash);
  }
  const Vocab vocab = load_vocab(args.corpus / "vocab.json");
  if (config.model.vocab_size < vocab.size()) {
    throw ConfigError("model vocab_size " + std::to_string(config.model.vocab_size) + " is below the corpus vocabulary " +
                      std::to_string(vocab.size()));
  }
  const auto docs = load_pretrain(args.corpus / "pretrain.jsonl");
  make_dir(args.out);
  auto m = manifest_base("pretrain", args.out, to_json(config));
  m["method"] = kBaseMethod;
  m["corpus_dir"] = fs::absolute(args.corpus).lexically_normal().string();
  m["corpus_hash"] = hash;

  std::string csv = "step,loss,lr,seconds\n";
  auto res = train_pretrain(docs, config, [&](const PretrainLogRow& r) {
    csv += std::to_string(r.step) + "," + csv_num(r.loss) + "," + csv_num(r.lr) + "," + csv_num(r.seconds) + "\n";
    if (r.step % 100 == 0 || r.step + 1 == config.steps) {
      log << "pretrain step " << r.step << " loss " << r.loss << '\n';
    }
  });
  save_checkpoint(res.model, config.steps, args.out / "base.ckpt");
  write_text_file(args.out / "loss.csv", csv);
  m["checkpoints"] = {{{"path", "base.ckpt"}, {"step", config.steps}, {"hash", file_hash(args.out / "base.ckpt")}}};
  finish_manifest(m, args.out);
}

namespace {

struct TrainInputs {
  ModelCheckpoint base;
  Vocab vocab;
  std::vector<DistillRecord> problems;
  nlohmann::json manifest;
};

TrainInputs load_train_inputs(const TrainArgs& args, const std::string& subcommand, const nlohmann::json& config) {
  if (!fs::exists(args.base)) throw IoError("base checkpoint '" + args.base.string() + "' does not exist");
  fs::path corpus;
  if (args.corpus) {
    corpus = *args.corpus;
  } else {
    auto bm = manifest_next_to(args.base);
    if (!bm || !bm->contains("corpus_dir")) {
      throw ConfigError("no --corpus given and the base checkpoint's manifest records no corpus");
    }
    corpus = bm->at("corpus_dir").get<std::string>();
  }
  TrainInputs in{load_checkpoint(args.base), load_vocab(corpus / "vocab.json"), {}, {}};
  in.vocab.dialect_index(args.dialect);
  if (args.dialect == in.vocab.dialect_name(0)) throw VocabError("dialect " + args.dialect + " is not a low-resource dialect");
  in.problems = load_distill(corpus / ("distill_" + args.dialect + ".jsonl"));
  make_dir(args.out);
  in.manifest = manifest_base(subcommand, args.out, config);
  in.manifest["dialect"] = args.dialect;
  in.manifest["corpus_dir"] = fs::absolute(corpus).lexically_normal().string();
  in.manifest["corpus_hash"] = corpus_hash(corpus);
  in.manifest["base_checkpoint"] = fs::absolute(args.base).lexically_normal().string();
  in.manifest["base_hash"] = file_hash(args.base);
  in.manifest["checkpoints"] = nlohmann::json::array();
  return in;
}

}  // namespace

void cmd_distill(const TrainArgs& args, std::ostream& log) {
  const nlohmann::json cfg = args.config ? read_json_file(*args.config) : nlohmann::json::object();
  const DistillConfig config = distill_config_from_json(cfg);
  auto in = load_train_inputs(args, "distill", to_json(config));
  in.manifest["method"] = "copsd";
  std::string csv = "step,loss,mean_rollout_len,zero_len_count,seconds\n";
  DistillHooks hooks;
  hooks.on_step = [&](const DistillLogRow& r) {
    csv += std::to_string(r.step) + "," + csv_num(r.loss) + "," + csv_num(r.mean_rollout_len) + "," +
           std::to_string(r.zero_len_count) + "," + csv_num(r.seconds) + "\n";
  };
  hooks.on_checkpoint = [&](int step, const Model& m) {
    const auto name = ckpt_name(step);
    save_checkpoint(m, step, args.out / name);
    in.manifest["checkpoints"].push_back({{"path", name}, {"step", step}, {"hash", file_hash(args.out / name)}});
    log << "distill " << args.dialect << " step " << step << '\n';
  };
  hooks.on_warning = [&](const std::string& w) { log << "warning: " << w << '\n'; };
  try {
    train_copsd(in.base.model, in.vocab, in.problems, args.dialect, config, hooks);
  } catch (...) {
    write_text_file(args.out / "steps.csv", csv);
    throw;
  }
  write_text_file(args.out / "steps.csv", csv);
  finish_manifest(in.manifest, args.out);
}

void cmd_grpo(const TrainArgs& args, std::ostream& log) {
  const nlohmann::json cfg = args.config ? read_json_file(*args.config) : nlohmann::json::object();
  const GrpoConfig config = grpo_config_from_json(cfg);
  auto in = load_train_inputs(args, "grpo", to_json(config));
  in.manifest["method"] = "grpo";
  std::string csv = "step,mean_reward,degenerate_group_frac,loss,seconds\n";
  GrpoHooks hooks;
  hooks.on_step = [&](const GrpoLogRow& r) {
    csv += std::to_string(r.step) + "," + csv_num(r.mean_reward) + "," + csv_num(r.degenerate_group_frac) + "," +
           csv_num(r.loss) + "," + csv_num(r.seconds) + "\n";
  };
  hooks.on_checkpoint = [&](int step, const Model& m) {
    const auto name = ckpt_name(step);
    save_checkpoint(m, step, args.out / name);
    in.manifest["checkpoints"].push_back({{"path", name}, {"step", step}, {"hash", file_hash(args.out / name)}});
    log << "grpo " << args.dialect << " step " << step << '\n';
  };
  try {
    train_grpo(in.base.model, in.vocab, in.problems, args.dialect, config, hooks);
  } catch (...) {
    write_text_file(args.out / "steps.csv", csv);
    throw;
  }
  write_text_file(args.out / "steps.csv", csv);
  finish_manifest(in.manifest, args.out);
}

void cmd_eval(const EvalArgs& args) {
  EvalConfig config;
  config.k = args.k;
  config.budgets = args.budgets;
  if (args.seed) config.seed = *args.seed;
  config.validate();
  const auto ck = load_checkpoint(args.ckpt);
  const Vocab vocab = load_vocab(args.vocab ? *args.vocab : args.eval_set.parent_path() / "vocab.json");
  const auto problems = load_eval(args.eval_set);
  if (problems.empty()) throw CorpusError("evaluation set '" + args.eval_set.string() + "' is empty");
  const std::string dialect = problems.front().dialect;
  for (const auto& p : problems) {
    if (p.dialect != dialect) throw CorpusError("evaluation set mixes dialects " + dialect + " and " + p.dialect);
  }
  const auto manifest = manifest_next_to(args.ckpt);
  std::string method = args.method.value_or(manifest && manifest->contains("method")
                                                ? manifest->at("method").get<std::string>()
                                                : kBaseMethod);
  std::string run_id = args.run_id.value_or(
      manifest && manifest->contains("run_id") ? manifest->at("run_id").get<std::string>() : std::string("run"));
  const std::int64_t step = method == kBaseMethod ? 0 : ck.step_tag;
  auto res = evaluate(ck.model, vocab, problems, dialect, config, run_id, method, step);
  append_metrics_csv(args.out, res.records);
  if (args.dump) write_generations_jsonl(*args.dump, res.generations);
}

void cmd_report(const ReportArgs& args, std::ostream& log) {
  const auto records = collect_metrics(args.runs);
  if (records.empty()) throw ProtocolError("no metrics CSV files found under '" + args.runs.string() + "'");
  const Report rep = build_report(records);
  for (const auto& c : rep.correlations) {
    for (const auto& w : c.report.warnings) log << "warning: " << w << '\n';
  }
  write_text_file(args.out, report_csv(rep));
}

void cmd_plot(const PlotArgs& args, std::ostream& log) {
  const auto records = read_metrics_csv(args.metrics);
  if (records.empty()) throw ProtocolError("metrics file '" + args.metrics.string() + "' holds no records");
  const auto plots = render_plots(records);
  for (const auto& w : plots.warnings) log << "warning: " << w << '\n';
  make_dir(args.out);
  for (const auto& [name, svg] : plots.files) write_text_file(args.out / name, svg);
}

}  // namespace copsd
