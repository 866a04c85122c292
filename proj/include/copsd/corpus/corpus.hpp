// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "copsd/corpus/problem.hpp"
#include "copsd/corpus/vocab.hpp"
#include "json.hpp"

namespace copsd {

struct CorpusSpec {
  std::uint64_t seed = 1234;
  int n_dialects = 3;  // low-resource dialects; H is always present
  int pretrain_h = 8000;
  int pretrain_l_per_dialect = 200;  // answer-only, no reasoning steps
  int parallel_per_dialect = 200;    // bilingual documents, see build_corpus
  bool answer_think_span = false;    // answer slice with think-open + prefix + think-close
  int distill_per_dialect = 500;
  int eval_per_dialect = 250;
  Difficulty difficulty;

  void validate() const;
};

// Throws ConfigError listing unknown keys.
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorpusSpec& spec);

struct PretrainDoc {
  std::int64_t id = 0;
  std::string dialect;
  std::string kind;  // "trace" | "answer" | "parallel"
  std::vector<int> tokens;
};

struct DistillRecord {
  std::int64_t id = 0;
  std::string dialect;
  std::vector<int> x_L;
  std::vector<int> x_H;
  std::vector<int> y_star;
  long answer = 0;
};

struct EvalRecord {
  std::int64_t id = 0;
  std::string dialect;
  std::vector<int> x_L;  // rendering in `dialect` (the H rendering for dialect "H")
  long answer = 0;
};

struct Corpus {
  Vocab vocab;
  std::vector<PretrainDoc> pretrain;
  std::vector<DistillRecord> distill;
  std::vector<EvalRecord> eval;
};

// Pure function of the spec. Problem ids: pretrain [0, P), distill
// [P, P + D), eval [P + D, P + D + E); distill/eval problems are shared by
// all dialects.
//
// Pretraining documents:
//   trace    bos x^H think prefix(H) y*
//   answer   bos x^L <box> answer </box> eos
//            (bos x^L think prefix(L) </think> <box> ... with answer_think_span)
//   parallel bos x^L sep x^H sep y* sep think prefix(L) trace-in-L
Corpus generate_corpus(const CorpusSpec& spec);

// Writes pretrain.jsonl, distill.jsonl, distill_<D>.jsonl, eval.jsonl,
// eval_<D>.jsonl and vocab.json. Byte-identical for identical specs.
void build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

std::vector<PretrainDoc> load_pretrain(const std::filesystem::path& path);
std::vector<DistillRecord> load_distill(const std::filesystem::path& path);
std::vector<EvalRecord> load_eval(const std::filesystem::path& path);
// Reads vocab.json back into a Vocab (dialect count only; ids are fixed).
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace copsd
