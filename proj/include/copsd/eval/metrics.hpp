// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "copsd/corpus/vocab.hpp"

namespace copsd {

// Integer inside the last box-open ... box-close span: an optional minus
// followed by one or more digits. Anything else yields nullopt.
std::optional<long> extract_boxed(std::span<const int> tokens);

// Per-problem OR over exactly k outcomes (ProtocolError otherwise).
bool pass_at_k_direct(const std::vector<bool>& outcomes, int k);
// 100 * mean of per-problem OR over all problems.
double pass_at_k_percent(const std::vector<std::vector<bool>>& outcomes, int k);
// 1 - C(n-c, k) / C(n, k) as a product of ratios in log space.
double pass_at_k_unbiased(int n, int c, int k);

// 100 * fraction of samples holding a parsable boxed integer.
double format_rate(const std::vector<std::vector<int>>& samples);

// 1 - |unique n-grams| / |n-grams| over contiguous n-grams; 0 when the
// sequence is shorter than n.
double repeat_rate(std::span<const int> tokens, int n);

// Fraction of dialect word tokens inside the think span (generated tokens up
// to the first think-close) that belong to `dialect`; 1 when there are none.
double language_consistency(const Vocab& vocab, std::span<const int> generated, int dialect);

enum class CorrelationKind { kPearson, kSpearman };

// Throws ParameterError on length mismatch or fewer than two points,
// UndefinedCorrelationError when either side has zero variance.
double correlation(std::span<const double> x, std::span<const double> y, CorrelationKind kind);
// Average ranks (1-based), ties share their mean rank.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace copsd
