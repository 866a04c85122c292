// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "copsd/corpus/vocab.hpp"
#include "copsd/diffcore/rng.hpp"

namespace copsd {

// Operand/operator ranges for synthetic problems. Chains are evaluated left
// to right with no operator precedence; every intermediate value stays
// inside [0, value_max].
struct Difficulty {
  int operand_min = 1;
  int operand_max = 9;
  int min_operands = 2;
  int max_operands = 4;
  int value_max = 99;

  void validate() const;
};

struct Problem {
  std::int64_t id = 0;
  std::vector<int> operands;
  std::vector<Op> ops;  // ops.size() == operands.size() - 1
  int subject = 0;
  int verb = 0;
  long answer = 0;

  friend bool operator==(const Problem& a, const Problem& b) {
    return a.operands == b.operands && a.ops == b.ops && a.subject == b.subject && a.verb == b.verb;
  }
};

long apply_op(long a, Op op, long b);
// Left-associative evaluation of operands/ops.
long evaluate_chain(std::span<const int> operands, std::span<const Op> ops);

Problem gen_problem(Rng& rng, const Difficulty& difficulty);

// H: subject verb expression; low-resource: expression subject verb.
std::vector<int> render(const Vocab& vocab, const Problem& problem, int dialect);
// Parses a rendering back into (operands, ops, subject, verb). Answer is
// recomputed; id is left at 0.
std::optional<Problem> parse_rendering(const Vocab& vocab, std::span<const int> tokens, int dialect);

// One line per chain step: step-word a op b equals c newline; then
// think-close box-open answer box-close eos.
std::vector<int> gen_trace(const Vocab& vocab, const Problem& problem, int dialect);
inline std::vector<int> gen_reference_trace(const Vocab& vocab, const Problem& problem) {
  return gen_trace(vocab, problem, 0);
}

// Answer-only completion: think-close box-open answer box-close eos.
std::vector<int> answer_only(const Problem& problem);

}  // namespace copsd
