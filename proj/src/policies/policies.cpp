// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/policies/policies.hpp"

#include "copsd/errors.hpp"

namespace copsd {

std::vector<int> think_prefix(const Vocab& vocab, const std::string& dialect) {
  return vocab.think_prefix(vocab.dialect_index(dialect));
}

namespace {

void check_rendering(const std::string& record_dialect, std::int64_t id, const std::vector<int>& x_L,
                     const std::string& dialect) {
  if (record_dialect != dialect || x_L.empty()) {
    throw CorpusError("problem " + std::to_string(id) + " has no rendering for dialect " + dialect);
  }
}

PolicyContext student(const Vocab& vocab, const std::vector<int>& x_L, const std::string& dialect) {
  PolicyContext c{PolicyRole::kStudent, {tok::kBos}, dialect};
  c.tokens.insert(c.tokens.end(), x_L.begin(), x_L.end());
  c.tokens.push_back(tok::kThinkOpen);
  const auto prefix = think_prefix(vocab, dialect);
  c.tokens.insert(c.tokens.end(), prefix.begin(), prefix.end());
  return c;
}

}  // namespace

PolicyContext build_student_context(const Vocab& vocab, const DistillRecord& problem, const std::string& dialect) {
  check_rendering(problem.dialect, problem.id, problem.x_L, dialect);
  return student(vocab, problem.x_L, dialect);
}

PolicyContext build_student_context(const Vocab& vocab, const EvalRecord& problem, const std::string& dialect) {
  check_rendering(problem.dialect, problem.id, problem.x_L, dialect);
  return student(vocab, problem.x_L, dialect);
}

PolicyContext build_teacher_context(const Vocab& vocab, const DistillRecord& problem, const std::string& dialect) {
  check_rendering(problem.dialect, problem.id, problem.x_L, dialect);
  if (problem.x_H.empty() || problem.y_star.empty()) {
    throw CorpusError("problem " + std::to_string(problem.id) + " lacks the high-resource rendering or reference");
  }
  PolicyContext c{PolicyRole::kTeacher, {tok::kBos}, dialect};
  auto& t = c.tokens;
  t.insert(t.end(), problem.x_L.begin(), problem.x_L.end());
  t.push_back(tok::kSep);
  t.insert(t.end(), problem.x_H.begin(), problem.x_H.end());
  t.push_back(tok::kSep);
  t.insert(t.end(), problem.y_star.begin(), problem.y_star.end());
  t.push_back(tok::kSep);
  t.push_back(tok::kThinkOpen);
  const auto prefix = think_prefix(vocab, dialect);
  t.insert(t.end(), prefix.begin(), prefix.end());
  return c;
}

}  // namespace copsd
