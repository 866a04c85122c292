// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "copsd/corpus/corpus.hpp"
#include "copsd/corpus/problem.hpp"
#include "copsd/corpus/vocab.hpp"
#include "copsd/errors.hpp"
#include "copsd/eval/metrics.hpp"
#include "doctest.h"

using namespace copsd;
namespace fs = std::filesystem;

namespace {

// Reference evaluator written independently of the library.
long eval_left_to_right(const Problem& p) {
  long acc = p.operands[0];
  for (std::size_t i = 0; i < p.ops.size(); ++i) {
    const long b = p.operands[i + 1];
    switch (p.ops[i]) {
      case Op::kAdd: acc += b; break;
      case Op::kSub: acc -= b; break;
      case Op::kMul: acc *= b; break;
    }
  }
  return acc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorpusSpec small_spec() {
  CorpusSpec s;
  s.pretrain_h = 300;
  s.pretrain_l_per_dialect = 20;
  s.parallel_per_dialect = 10;
  s.distill_per_dialect = 30;
  s.eval_per_dialect = 25;
  return s;
}

// Word tokens of a sequence must all belong to `dialect`.
bool words_only_from(const Vocab& v, std::span<const int> tokens, int dialect) {
  for (int t : tokens) {
    const int d = v.dialect_of(t);
    if (d != -1 && d != dialect) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("vocab layout") {
  const Vocab v(3);
  CHECK(v.n_dialects() == 4);
  CHECK(v.size() == 22 + 4 * 23);
  CHECK(v.dialects() == std::vector<std::string>{"H", "L1", "L2", "L3"});
  std::set<int> seen;
  for (int d = 0; d < v.n_dialects(); ++d) {
    const auto [lo, hi] = v.partition(d);
    CHECK(lo >= tok::kFirstWord);
    for (int id = lo; id < hi; ++id) {
      CHECK(seen.insert(id).second);
      CHECK(v.dialect_of(id) == d);
    }
  }
  for (int id = 0; id < tok::kFirstWord; ++id) CHECK(v.dialect_of(id) == -1);
  CHECK(v.dialect_index("L2") == 2);
  CHECK_THROWS_AS(v.dialect_index("L9"), VocabError);
}

TEST_CASE("encode/decode") {
  const Vocab v(3);
  CHECK(encode_number(42) == std::vector<int>{tok::kDigit0 + 4, tok::kDigit0 + 2});
  CHECK(encode_number(-7) == std::vector<int>{tok::kMinus, tok::kDigit0 + 7});
  CHECK(encode(v, "4 2") == std::vector<int>{12, 10});
  std::vector<int> all(static_cast<std::size_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  CHECK(encode(v, decode(v, all)) == all);
  const int bad[] = {v.size() + 1};
  CHECK_THROWS_AS(decode(v, bad), VocabError);
  CHECK_THROWS_AS(encode(v, "no_such_token"), VocabError);
}

TEST_CASE("left-associative hand example") {
  const int operands[] = {3, 4, 2};
  const Op ops[] = {Op::kAdd, Op::kMul};
  CHECK(evaluate_chain(operands, ops) == 14);
}

TEST_CASE("gen_problem is deterministic") {
  Rng a(5), b(5);
  const Difficulty d;
  for (int i = 0; i < 100; ++i) CHECK(gen_problem(a, d) == gen_problem(b, d));
}

TEST_CASE("gold answers match an independent evaluator over 10k samples") {
  Rng rng(1);
  const Difficulty d;
  for (int i = 0; i < 10000; ++i) {
    const auto p = gen_problem(rng, d);
    REQUIRE(p.ops.size() + 1 == p.operands.size());
    REQUIRE(p.operands.size() >= static_cast<std::size_t>(d.min_operands));
    REQUIRE(p.operands.size() <= static_cast<std::size_t>(d.max_operands));
    REQUIRE(p.answer == eval_left_to_right(p));
    for (int x : p.operands) REQUIRE((x >= d.operand_min && x <= d.operand_max));
  }
}

TEST_CASE("renderings: shared math tokens, disjoint words, template order") {
  const Vocab v(3);
  Problem p;
  p.operands = {3, 4, 2};
  p.ops = {Op::kAdd, Op::kMul};
  p.subject = 2;
  p.verb = 1;
  p.answer = 14;
  const auto h = render(v, p, 0);
  const auto l1 = render(v, p, 1);
  const std::vector<int> expr = {11, tok::kPlus, 12, tok::kTimes, 10};
  CHECK(h == std::vector<int>{v.word(0, WordRole::kSubject, 2), v.word(0, WordRole::kVerb, 1), 11, 18, 12, 20, 10});
  CHECK(std::vector<int>(h.begin() + 2, h.end()) == expr);
  CHECK(std::vector<int>(l1.begin(), l1.end() - 2) == expr);
  for (int a : h) {
    for (int b : l1) {
      if (v.is_word(a) || v.is_word(b)) CHECK(a != b);
    }
  }
  CHECK_THROWS_AS(render(v, p, 4), VocabError);
}

TEST_CASE("render is injective and parses back over 10k samples") {
  const Vocab v(3);
  Rng rng(2);
  for (int d = 0; d < v.n_dialects(); ++d) {
    std::set<std::vector<int>> seen_problems;
    std::set<std::vector<int>> seen_renders;
    Rng local(static_cast<std::uint64_t>(d) + 10);
    for (int i = 0; i < 10000; ++i) {
      const auto p = gen_problem(local, Difficulty{});
      std::vector<int> key = {p.subject, p.verb};
      for (std::size_t k = 0; k < p.operands.size(); ++k) {
        key.push_back(p.operands[k]);
        if (k < p.ops.size()) key.push_back(100 + static_cast<int>(p.ops[k]));
      }
      const auto r = render(v, p, d);
      REQUIRE(words_only_from(v, r, d));
      // Distinct problems map to distinct sequences, equal problems to equal ones.
      CHECK(seen_problems.insert(key).second == seen_renders.insert(r).second);
      const auto back = parse_rendering(v, encode(v, decode(v, r)), d);
      REQUIRE(back.has_value());
      CHECK(*back == p);
      CHECK(back->answer == p.answer);
    }
  }
}

TEST_CASE("reference trace hand expansion") {
  const Vocab v(3);
  Problem p;
  p.operands = {3, 4};
  p.ops = {Op::kAdd};
  p.answer = 7;
  const auto t = gen_reference_trace(v, p);
  const std::vector<int> expected = {v.word(0, WordRole::kStep, 0), 11, tok::kPlus, 12, tok::kEquals, 15,
                                     tok::kNewline, tok::kThinkClose, tok::kBoxOpen, 15, tok::kBoxClose, tok::kEos};
  CHECK(t == expected);
}

TEST_CASE("reference traces box the gold answer over 10k samples") {
  const Vocab v(3);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto p = gen_problem(rng, Difficulty{});
    const auto t = gen_reference_trace(v, p);
    REQUIRE(words_only_from(v, t, 0));
    const auto boxed = extract_boxed(t);
    REQUIRE(boxed.has_value());
    REQUIRE(*boxed == p.answer);
    CHECK(std::count(t.begin(), t.end(), tok::kNewline) == static_cast<long>(p.ops.size()));
  }
}

TEST_CASE("default spec counts") {
  const CorpusSpec spec;
  CHECK(spec.pretrain_h == 8000);
  CHECK(spec.pretrain_l_per_dialect == 200);
  CHECK(spec.distill_per_dialect == 500);
  CHECK(spec.eval_per_dialect == 250);
  CHECK(spec.n_dialects == 3);
  // L answer slice is 2.5% of H volume.
  CHECK(spec.pretrain_l_per_dialect * 40 == spec.pretrain_h);
}

TEST_CASE("spec validation and JSON") {
  auto s = small_spec();
  s.eval_per_dialect = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  const auto j = to_json(small_spec());
  const auto back = corpus_spec_from_json(j);
  CHECK(to_json(back) == j);
  auto bad = j;
  bad["bogus"] = 1;
  CHECK_THROWS_AS(corpus_spec_from_json(bad), ConfigError);
}

TEST_CASE("generated corpus properties") {
  const auto spec = small_spec();
  const auto c = generate_corpus(spec);
  const auto& v = c.vocab;
  const int K = spec.n_dialects;

  std::size_t traces = 0, answers = 0, parallel = 0;
  std::set<std::int64_t> pre_ids, distill_ids, eval_ids;
  for (const auto& d : c.pretrain) {
    pre_ids.insert(d.id);
    const int di = v.dialect_index(d.dialect);
    if (d.kind == "trace") {
      ++traces;
      CHECK(d.dialect == "H");
      CHECK(words_only_from(v, d.tokens, 0));
      CHECK(d.tokens.front() == tok::kBos);
    } else if (d.kind == "answer") {
      ++answers;
      CHECK(di > 0);
      CHECK(words_only_from(v, d.tokens, di));
      // No reasoning steps in the L slice.
      CHECK(std::count(d.tokens.begin(), d.tokens.end(), tok::kEquals) == 0);
      CHECK(extract_boxed(d.tokens).has_value());
    } else {
      CHECK(d.kind == "parallel");
      ++parallel;
    }
  }
  CHECK(traces == static_cast<std::size_t>(spec.pretrain_h));
  CHECK(answers == static_cast<std::size_t>(K * spec.pretrain_l_per_dialect));
  CHECK(parallel == static_cast<std::size_t>(K * spec.parallel_per_dialect));

  CHECK(c.distill.size() == static_cast<std::size_t>(K * spec.distill_per_dialect));
  for (const auto& r : c.distill) {
    distill_ids.insert(r.id);
    const int di = v.dialect_index(r.dialect);
    CHECK(di > 0);
    CHECK(words_only_from(v, r.x_L, di));
    CHECK(words_only_from(v, r.x_H, 0));
    CHECK(words_only_from(v, r.y_star, 0));
    CHECK(extract_boxed(r.y_star) == r.answer);
    CHECK(parse_rendering(v, r.x_L, di)->answer == r.answer);
    CHECK(parse_rendering(v, r.x_H, 0)->answer == r.answer);
  }
  CHECK(distill_ids.size() == static_cast<std::size_t>(spec.distill_per_dialect));

  CHECK(c.eval.size() == static_cast<std::size_t>((K + 1) * spec.eval_per_dialect));
  for (const auto& r : c.eval) {
    eval_ids.insert(r.id);
    const int di = v.dialect_index(r.dialect);
    CHECK(words_only_from(v, r.x_L, di));
    CHECK(parse_rendering(v, r.x_L, di)->answer == r.answer);
  }

  for (auto id : distill_ids) CHECK(pre_ids.count(id) == 0);
  for (auto id : eval_ids) {
    CHECK(pre_ids.count(id) == 0);
    CHECK(distill_ids.count(id) == 0);
  }
}

TEST_CASE("corpus is a pure function of the spec and files round trip") {
  const auto spec = small_spec();
  const auto dir_a = fs::temp_directory_path() / "copsd_corpus_a";
  const auto dir_b = fs::temp_directory_path() / "copsd_corpus_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  build_corpus(spec, dir_a);
  build_corpus(spec, dir_b);
  for (const auto* name : {"pretrain.jsonl", "distill.jsonl", "distill_L1.jsonl", "eval.jsonl", "eval_H.jsonl",
                           "eval_L3.jsonl", "vocab.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir_a / name));
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));
  }
  const auto c = generate_corpus(spec);
  const auto pre = load_pretrain(dir_a / "pretrain.jsonl");
  REQUIRE(pre.size() == c.pretrain.size());
  for (std::size_t i = 0; i < pre.size(); ++i) CHECK(pre[i].tokens == c.pretrain[i].tokens);
  const auto dis = load_distill(dir_a / "distill_L2.jsonl");
  CHECK(dis.size() == static_cast<std::size_t>(spec.distill_per_dialect));
  for (const auto& r : dis) CHECK(r.dialect == "L2");
  const auto ev = load_eval(dir_a / "eval.jsonl");
  CHECK(ev.size() == c.eval.size());
  CHECK(load_vocab(dir_a / "vocab.json").size() == c.vocab.size());

  auto other = spec;
  other.seed += 1;
  build_corpus(other, dir_b);
  CHECK(slurp(dir_a / "distill.jsonl") != slurp(dir_b / "distill.jsonl"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("loaders surface malformed files with the path") {
  const auto path = fs::temp_directory_path() / "copsd_bad.jsonl";
  {
    std::ofstream out(path);
    out << "{\"id\": 1, \"dialect\": \"L1\"}\n";
  }
  try {
    load_eval(path);
    FAIL("expected a corpus error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
  }
  CHECK_THROWS(load_eval(fs::temp_directory_path() / "copsd_missing.jsonl"));
  fs::remove(path);
}
