// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "copsd/errors.hpp"

namespace copsd {

std::optional<long> extract_boxed(std::span<const int> tokens) {
  std::ptrdiff_t open = -1, begin = -1, end = -1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == tok::kBoxOpen) {
      open = static_cast<std::ptrdiff_t>(i);
    } else if (tokens[i] == tok::kBoxClose && open >= 0) {
      begin = open + 1;
      end = static_cast<std::ptrdiff_t>(i);
      open = -1;
    }
  }
  if (begin < 0) return std::nullopt;
  std::ptrdiff_t i = begin;
  bool negative = false;
  if (i < end && tokens[i] == tok::kMinus) {
    negative = true;
    ++i;
  }
  if (i == end || end - i > 18) return std::nullopt;
  long value = 0;
  for (; i < end; ++i) {
    const int d = tokens[i] - tok::kDigit0;
    if (d < 0 || d > 9) return std::nullopt;
    value = value * 10 + d;
  }
  return negative ? -value : value;
}

bool pass_at_k_direct(const std::vector<bool>& outcomes, int k) {
  if (static_cast<int>(outcomes.size()) != k) {
    throw ProtocolError("expected " + std::to_string(k) + " outcomes, got " + std::to_string(outcomes.size()));
  }
  return std::any_of(outcomes.begin(), outcomes.end(), [](bool b) { return b; });
}

double pass_at_k_percent(const std::vector<std::vector<bool>>& outcomes, int k) {
  if (outcomes.empty()) throw ProtocolError("pass@k over an empty problem set");
  std::size_t hits = 0;
  for (const auto& o : outcomes) hits += pass_at_k_direct(o, k);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double pass_at_k_unbiased(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
    throw ParameterError("pass_at_k_unbiased needs 0 <= c <= n and 1 <= k <= n (n=" + std::to_string(n) +
                         ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double log_ratio = 0.0;
  for (int i = n - c + 1; i <= n; ++i) log_ratio += std::log1p(-static_cast<double>(k) / i);
  return 1.0 - std::exp(log_ratio);
}

double format_rate(const std::vector<std::vector<int>>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : samples) ok += extract_boxed(s).has_value();
  return 100.0 * static_cast<double>(ok) / static_cast<double>(samples.size());
}

double repeat_rate(std::span<const int> tokens, int n) {
  if (n < 1) throw ParameterError("repeat rate needs n >= 1");
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return 0.0;
  const std::size_t total = tokens.size() - un + 1;
  std::set<std::vector<int>> unique;
  for (std::size_t i = 0; i < total; ++i) unique.emplace(tokens.begin() + i, tokens.begin() + i + un);
  return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(total);
}

double language_consistency(const Vocab& vocab, std::span<const int> generated, int dialect) {
  std::size_t words = 0, own = 0;
  for (int t : generated) {
    if (t == tok::kThinkClose) break;
    const int d = vocab.dialect_of(t);
    if (d < 0) continue;
    ++words;
    own += d == dialect;
  }
  return words == 0 ? 1.0 : static_cast<double>(own) / static_cast<double>(words);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double correlation(std::span<const double> x, std::span<const double> y, CorrelationKind kind) {
  if (x.size() != y.size()) {
    throw ParameterError("correlation inputs differ in length (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw ParameterError("correlation needs at least two points");
  if (kind == CorrelationKind::kPearson) return pearson(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace copsd
