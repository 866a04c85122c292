// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/corpus/problem.hpp"

#include "copsd/errors.hpp"

namespace copsd {

void Difficulty::validate() const {
  if (operand_min < 0 || operand_max < operand_min) throw ConfigError("operand range is empty or negative");
  if (min_operands < 2 || max_operands < min_operands) throw ConfigError("chain length must be at least 2 operands");
  if (value_max < operand_max) throw ConfigError("value_max must be at least operand_max");
}

long apply_op(long a, Op op, long b) {
  switch (op) {
    case Op::kAdd:
      return a + b;
    case Op::kSub:
      return a - b;
    case Op::kMul:
      return a * b;
  }
  return 0;
}

long evaluate_chain(std::span<const int> operands, std::span<const Op> ops) {
  long acc = operands.empty() ? 0 : operands[0];
  for (std::size_t i = 0; i < ops.size(); ++i) acc = apply_op(acc, ops[i], operands[i + 1]);
  return acc;
}

Problem gen_problem(Rng& rng, const Difficulty& d) {
  d.validate();
  Problem p;
  const auto span = static_cast<std::uint64_t>(d.operand_max - d.operand_min + 1);
  const int n = d.min_operands + static_cast<int>(rng.below(static_cast<std::uint64_t>(d.max_operands - d.min_operands + 1)));
  long acc = d.operand_min + static_cast<long>(rng.below(span));
  p.operands.push_back(static_cast<int>(acc));
  std::vector<std::pair<Op, int>> moves;
  for (int i = 1; i < n; ++i) {
    moves.clear();
    for (Op op : {Op::kAdd, Op::kSub, Op::kMul}) {
      for (int b = d.operand_min; b <= d.operand_max; ++b) {
        const long r = apply_op(acc, op, b);
        if (r >= 0 && r <= d.value_max) moves.emplace_back(op, b);
      }
    }
    if (moves.empty()) break;
    const auto [op, b] = moves[rng.below(moves.size())];
    acc = apply_op(acc, op, b);
    p.ops.push_back(op);
    p.operands.push_back(b);
  }
  p.subject = static_cast<int>(rng.below(Vocab::kSubjectWords));
  p.verb = static_cast<int>(rng.below(Vocab::kVerbWords));
  p.answer = acc;
  return p;
}

namespace {

std::vector<int> expression(const Problem& p) {
  std::vector<int> out = encode_number(p.operands[0]);
  for (std::size_t i = 0; i < p.ops.size(); ++i) {
    out.push_back(op_token(p.ops[i]));
    const auto num = encode_number(p.operands[i + 1]);
    out.insert(out.end(), num.begin(), num.end());
  }
  return out;
}

}  // namespace

std::vector<int> render(const Vocab& vocab, const Problem& problem, int dialect) {
  const int subj = vocab.word(dialect, WordRole::kSubject, problem.subject);
  const int verb = vocab.word(dialect, WordRole::kVerb, problem.verb);
  const auto expr = expression(problem);
  std::vector<int> out;
  if (dialect == 0) {
    out = {subj, verb};
    out.insert(out.end(), expr.begin(), expr.end());
  } else {
    out = expr;
    out.push_back(subj);
    out.push_back(verb);
  }
  return out;
}

std::optional<Problem> parse_rendering(const Vocab& vocab, std::span<const int> tokens, int dialect) {
  if (tokens.size() < 5) return std::nullopt;
  std::span<const int> words, expr;
  if (dialect == 0) {
    words = tokens.first(2);
    expr = tokens.subspan(2);
  } else {
    words = tokens.last(2);
    expr = tokens.first(tokens.size() - 2);
  }
  auto [lo, hi] = vocab.partition(dialect);
  const int subj0 = vocab.word(dialect, WordRole::kSubject, 0);
  const int verb0 = vocab.word(dialect, WordRole::kVerb, 0);
  if (words[0] < subj0 || words[0] >= subj0 + Vocab::kSubjectWords) return std::nullopt;
  if (words[1] < verb0 || words[1] >= verb0 + Vocab::kVerbWords) return std::nullopt;
  (void)lo;
  (void)hi;

  Problem p;
  p.subject = words[0] - subj0;
  p.verb = words[1] - verb0;
  std::size_t i = 0;
  auto read_number = [&](int& out) {
    if (i >= expr.size() || !vocab.is_digit(expr[i])) return false;
    long v = 0;
    while (i < expr.size() && vocab.is_digit(expr[i])) v = v * 10 + (expr[i++] - tok::kDigit0);
    out = static_cast<int>(v);
    return true;
  };
  int v = 0;
  if (!read_number(v)) return std::nullopt;
  p.operands.push_back(v);
  while (i < expr.size()) {
    const int t = expr[i++];
    if (t == tok::kPlus) {
      p.ops.push_back(Op::kAdd);
    } else if (t == tok::kMinus) {
      p.ops.push_back(Op::kSub);
    } else if (t == tok::kTimes) {
      p.ops.push_back(Op::kMul);
    } else {
      return std::nullopt;
    }
    if (!read_number(v)) return std::nullopt;
    p.operands.push_back(v);
  }
  if (p.ops.empty()) return std::nullopt;
  p.answer = evaluate_chain(p.operands, p.ops);
  return p;
}

std::vector<int> answer_only(const Problem& problem) {
  std::vector<int> out = {tok::kThinkClose, tok::kBoxOpen};
  const auto ans = encode_number(problem.answer);
  out.insert(out.end(), ans.begin(), ans.end());
  out.push_back(tok::kBoxClose);
  out.push_back(tok::kEos);
  return out;
}

std::vector<int> gen_trace(const Vocab& vocab, const Problem& problem, int dialect) {
  std::vector<int> out;
  const int step = vocab.word(dialect, WordRole::kStep, 0);
  long acc = problem.operands.at(0);
  for (std::size_t i = 0; i < problem.ops.size(); ++i) {
    const long b = problem.operands[i + 1];
    const long c = apply_op(acc, problem.ops[i], b);
    out.push_back(step);
    for (int t : encode_number(acc)) out.push_back(t);
    out.push_back(op_token(problem.ops[i]));
    for (int t : encode_number(b)) out.push_back(t);
    out.push_back(tok::kEquals);
    for (int t : encode_number(c)) out.push_back(t);
    out.push_back(tok::kNewline);
    acc = c;
  }
  const auto tail = answer_only(problem);
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace copsd
