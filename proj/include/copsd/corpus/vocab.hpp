// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace copsd {

// Fixed special ids.
namespace tok {
inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kThinkOpen = 2;
inline constexpr int kThinkClose = 3;
inline constexpr int kBoxOpen = 4;
inline constexpr int kBoxClose = 5;
inline constexpr int kSep = 6;
inline constexpr int kNewline = 7;
inline constexpr int kDigit0 = 8;  // digits occupy 8..17
inline constexpr int kPlus = 18;
inline constexpr int kMinus = 19;
inline constexpr int kTimes = 20;
inline constexpr int kEquals = 21;
inline constexpr int kFirstWord = 22;
}  // namespace tok

enum class Op { kAdd, kSub, kMul };

// Word roles within each dialect partition.
enum class WordRole { kPrefix, kSubject, kVerb, kStep };

// Token inventory: specials, shared math tokens, then one contiguous block of
// word ids per dialect. Dialect 0 is the high-resource dialect "H"; the rest
// are low-resource "L1".."LK".
class Vocab {
 public:
  static constexpr int kPrefixWords = 4;
  static constexpr int kSubjectWords = 12;
  static constexpr int kVerbWords = 6;
  static constexpr int kStepWords = 1;
  static constexpr int kWordsPerDialect = kPrefixWords + kSubjectWords + kVerbWords + kStepWords;

  explicit Vocab(int n_low_resource = 3);

  int size() const { return tok::kFirstWord + n_dialects() * kWordsPerDialect; }
  int n_dialects() const { return static_cast<int>(dialects_.size()); }
  const std::vector<std::string>& dialects() const { return dialects_; }
  // Throws VocabError for an unknown name.
  int dialect_index(const std::string& name) const;
  const std::string& dialect_name(int index) const;

  int word(int dialect, WordRole role, int i) const;
  // Dialect owning a word id, or -1 for specials/shared tokens.
  int dialect_of(int id) const;
  bool is_word(int id) const { return id >= tok::kFirstWord && id < size(); }
  bool is_digit(int id) const { return id >= tok::kDigit0 && id < tok::kDigit0 + 10; }
  // First and one-past-last word id of a dialect.
  std::pair<int, int> partition(int dialect) const;

  // Fixed four-word think prefix of a dialect.
  std::vector<int> think_prefix(int dialect) const;

  std::string token_name(int id) const;  // throws VocabError on unknown id
  int token_id(const std::string& name) const;

  nlohmann::json to_json() const;

 private:
  std::vector<std::string> dialects_;
};

int op_token(Op op);
// Digit tokens of an integer, with a leading minus token when negative.
std::vector<int> encode_number(long value);

// Human-readable surface: space-separated token names. encode/decode are
// inverse on every valid id sequence.
std::string decode(const Vocab& vocab, std::span<const int> ids);
std::vector<int> encode(const Vocab& vocab, const std::string& text);

}  // namespace copsd
