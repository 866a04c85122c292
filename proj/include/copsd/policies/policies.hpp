// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <string>
#include <vector>

#include "copsd/corpus/corpus.hpp"

namespace copsd {

enum class PolicyRole { kStudent, kTeacher };

struct PolicyContext {
  PolicyRole role = PolicyRole::kStudent;
  std::vector<int> tokens;  // prompt including think-open and the forced prefix
  std::string dialect;
};

// Four words of the dialect's partition forced right after think-open.
std::vector<int> think_prefix(const Vocab& vocab, const std::string& dialect);

// [bos, x^L, think-open, prefix]
PolicyContext build_student_context(const Vocab& vocab, const DistillRecord& problem, const std::string& dialect);
PolicyContext build_student_context(const Vocab& vocab, const EvalRecord& problem, const std::string& dialect);
// [bos, x^L, sep, x^H, sep, y*, sep, think-open, prefix]
PolicyContext build_teacher_context(const Vocab& vocab, const DistillRecord& problem, const std::string& dialect);

}  // namespace copsd
