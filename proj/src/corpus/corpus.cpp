// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/corpus/corpus.hpp"

#include <fstream>
#include <set>

#include "copsd/errors.hpp"

namespace copsd {

void CorpusSpec::validate() const {
  difficulty.validate();
  if (n_dialects < 1) throw ConfigError("n_dialects must be positive");
  if (pretrain_h <= 0 || pretrain_l_per_dialect <= 0 || distill_per_dialect <= 0 || eval_per_dialect <= 0) {
    throw ConfigError("corpus counts must be positive");
  }
  if (parallel_per_dialect < 0) throw ConfigError("parallel_per_dialect must be non-negative");
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& what) {
  std::string unknown;
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("unknown " + what + " keys: " + unknown);
}

}  // namespace

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"seed", "n_dialects", "pretrain_h", "pretrain_l_per_dialect", "parallel_per_dialect",
                  "answer_think_span", "distill_per_dialect", "eval_per_dialect", "difficulty"},
                 "corpus config");
  CorpusSpec s;
  s.seed = j.value("seed", s.seed);
  s.n_dialects = j.value("n_dialects", s.n_dialects);
  s.pretrain_h = j.value("pretrain_h", s.pretrain_h);
  s.pretrain_l_per_dialect = j.value("pretrain_l_per_dialect", s.pretrain_l_per_dialect);
  s.parallel_per_dialect = j.value("parallel_per_dialect", s.parallel_per_dialect);
  s.answer_think_span = j.value("answer_think_span", s.answer_think_span);
  s.distill_per_dialect = j.value("distill_per_dialect", s.distill_per_dialect);
  s.eval_per_dialect = j.value("eval_per_dialect", s.eval_per_dialect);
  if (j.contains("difficulty")) {
    const auto& d = j.at("difficulty");
    reject_unknown(d, {"operand_min", "operand_max", "min_operands", "max_operands", "value_max"}, "difficulty");
    s.difficulty.operand_min = d.value("operand_min", s.difficulty.operand_min);
    s.difficulty.operand_max = d.value("operand_max", s.difficulty.operand_max);
    s.difficulty.min_operands = d.value("min_operands", s.difficulty.min_operands);
    s.difficulty.max_operands = d.value("max_operands", s.difficulty.max_operands);
    s.difficulty.value_max = d.value("value_max", s.difficulty.value_max);
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const CorpusSpec& s) {
  return {{"seed", s.seed},
          {"n_dialects", s.n_dialects},
          {"pretrain_h", s.pretrain_h},
          {"pretrain_l_per_dialect", s.pretrain_l_per_dialect},
          {"parallel_per_dialect", s.parallel_per_dialect},
          {"answer_think_span", s.answer_think_span},
          {"distill_per_dialect", s.distill_per_dialect},
          {"eval_per_dialect", s.eval_per_dialect},
          {"difficulty",
           {{"operand_min", s.difficulty.operand_min},
            {"operand_max", s.difficulty.operand_max},
            {"min_operands", s.difficulty.min_operands},
            {"max_operands", s.difficulty.max_operands},
            {"value_max", s.difficulty.value_max}}}};
}

namespace {

void append(std::vector<int>& out, const std::vector<int>& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus c{Vocab(spec.n_dialects), {}, {}, {}};
  const auto& vocab = c.vocab;
  Rng rng(spec.seed);
  std::int64_t next_id = 0;
  auto next_problem = [&] {
    Problem p = gen_problem(rng, spec.difficulty);
    p.id = next_id++;
    return p;
  };

  for (int i = 0; i < spec.pretrain_h; ++i) {
    const Problem p = next_problem();
    std::vector<int> t = {tok::kBos};
    append(t, render(vocab, p, 0));
    t.push_back(tok::kThinkOpen);
    append(t, vocab.think_prefix(0));
    append(t, gen_reference_trace(vocab, p));
    c.pretrain.push_back({p.id, "H", "trace", std::move(t)});
  }
  for (int d = 1; d <= spec.n_dialects; ++d) {
    for (int i = 0; i < spec.pretrain_l_per_dialect; ++i) {
      const Problem p = next_problem();
      std::vector<int> t = {tok::kBos};
      append(t, render(vocab, p, d));
      std::vector<int> answer = answer_only(p);
      if (spec.answer_think_span) {
        t.push_back(tok::kThinkOpen);
        append(t, vocab.think_prefix(d));
      } else {
        answer.erase(answer.begin());  // drop think-close
      }
      append(t, answer);
      c.pretrain.push_back({p.id, vocab.dialect_name(d), "answer", std::move(t)});
    }
    for (int i = 0; i < spec.parallel_per_dialect; ++i) {
      const Problem p = next_problem();
      std::vector<int> t = {tok::kBos};
      append(t, render(vocab, p, d));
      t.push_back(tok::kSep);
      append(t, render(vocab, p, 0));
      t.push_back(tok::kSep);
      append(t, gen_reference_trace(vocab, p));
      t.push_back(tok::kSep);
      t.push_back(tok::kThinkOpen);
      append(t, vocab.think_prefix(d));
      append(t, gen_trace(vocab, p, d));
      c.pretrain.push_back({p.id, vocab.dialect_name(d), "parallel", std::move(t)});
    }
  }

  std::vector<Problem> distill_problems, eval_problems;
  for (int i = 0; i < spec.distill_per_dialect; ++i) distill_problems.push_back(next_problem());
  for (int i = 0; i < spec.eval_per_dialect; ++i) eval_problems.push_back(next_problem());

  for (int d = 1; d <= spec.n_dialects; ++d) {
    for (const auto& p : distill_problems) {
      c.distill.push_back({p.id, vocab.dialect_name(d), render(vocab, p, d), render(vocab, p, 0),
                           gen_reference_trace(vocab, p), p.answer});
    }
  }
  for (int d = 0; d <= spec.n_dialects; ++d) {
    for (const auto& p : eval_problems) c.eval.push_back({p.id, vocab.dialect_name(d), render(vocab, p, d), p.answer});
  }
  return c;
}

namespace {

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }
  void write(const nlohmann::json& j) {
    out_ << j.dump() << '\n';
    if (!out_) throw IoError("failed writing '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

nlohmann::json distill_json(const DistillRecord& r) {
  return {{"id", r.id}, {"dialect", r.dialect}, {"x_L", r.x_L}, {"x_H", r.x_H}, {"y_star", r.y_star}, {"answer", r.answer}};
}

nlohmann::json eval_json(const EvalRecord& r) {
  return {{"id", r.id}, {"dialect", r.dialect}, {"x_L", r.x_L}, {"answer", r.answer}};
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

void build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  const Corpus c = generate_corpus(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  {
    JsonlWriter w(out_dir / "pretrain.jsonl");
    for (const auto& d : c.pretrain) {
      w.write({{"id", d.id}, {"dialect", d.dialect}, {"kind", d.kind}, {"tokens", d.tokens}});
    }
  }
  {
    JsonlWriter all(out_dir / "distill.jsonl");
    for (const auto& r : c.distill) all.write(distill_json(r));
  }
  {
    JsonlWriter all(out_dir / "eval.jsonl");
    for (const auto& r : c.eval) all.write(eval_json(r));
  }
  for (int d = 0; d < c.vocab.n_dialects(); ++d) {
    const auto& name = c.vocab.dialect_name(d);
    if (d > 0) {
      JsonlWriter w(out_dir / ("distill_" + name + ".jsonl"));
      for (const auto& r : c.distill) {
        if (r.dialect == name) w.write(distill_json(r));
      }
    }
    JsonlWriter w(out_dir / ("eval_" + name + ".jsonl"));
    for (const auto& r : c.eval) {
      if (r.dialect == name) w.write(eval_json(r));
    }
  }
  std::ofstream v(out_dir / "vocab.json", std::ios::binary | std::ios::trunc);
  if (!v) throw IoError("cannot write vocab.json in '" + out_dir.string() + "'");
  v << c.vocab.to_json().dump(2) << '\n';
}

std::vector<PretrainDoc> load_pretrain(const std::filesystem::path& path) {
  std::vector<PretrainDoc> out;
  for_each_line(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("id").get<std::int64_t>(), j.at("dialect").get<std::string>(), j.value("kind", std::string("trace")),
                   j.at("tokens").get<std::vector<int>>()});
  });
  return out;
}

std::vector<DistillRecord> load_distill(const std::filesystem::path& path) {
  std::vector<DistillRecord> out;
  for_each_line(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("id").get<std::int64_t>(), j.at("dialect").get<std::string>(), j.at("x_L").get<std::vector<int>>(),
                   j.at("x_H").get<std::vector<int>>(), j.at("y_star").get<std::vector<int>>(), j.at("answer").get<long>()});
  });
  return out;
}

std::vector<EvalRecord> load_eval(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  for_each_line(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("id").get<std::int64_t>(), j.at("dialect").get<std::string>(), j.at("x_L").get<std::vector<int>>(),
                   j.at("answer").get<long>()});
  });
  return out;
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
  const auto n = j.at("partitions").size();
  if (n < 2) throw CorpusError(path.string() + ": vocabulary lists fewer than two dialects");
  Vocab v(static_cast<int>(n) - 1);
  if (v.size() != j.at("size").get<int>()) throw CorpusError(path.string() + ": vocabulary size disagrees with layout");
  return v;
}

}  // namespace copsd
