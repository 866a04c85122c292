// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/corpus/vocab.hpp"

#include <array>
#include <sstream>
#include <unordered_map>

#include "copsd/errors.hpp"

namespace copsd {
namespace {

constexpr std::array<const char*, Vocab::kWordsPerDialect> kHighResourceWords = {
    // prefix
    "as", "requested", "i", "reason",
    // subjects
    "apples", "birds", "coins", "cups", "eggs", "fish", "goats", "hats", "keys", "lamps", "pens", "rocks",
    // verbs
    "has", "gets", "finds", "buys", "sees", "keeps",
    // step
    "then"};

constexpr std::array<const char*, 8> kSpecialNames = {"<bos>", "<eos>", "<think>", "</think>",
                                                      "<box>", "</box>", "<sep>", "<nl>"};
constexpr std::array<const char*, 4> kOpNames = {"+", "-", "*", "="};
constexpr std::array<const char*, 3> kConsonants = {"kmrtn", "bdglw", "sfpzh"};
constexpr const char* kVowels = "aeiou";

std::string synthetic_word(int dialect, int i) {
  if (dialect - 1 < static_cast<int>(kConsonants.size())) {
    const char* c = kConsonants[static_cast<std::size_t>(dialect - 1)];
    std::string w;
    w += c[i % 5];
    w += kVowels[(i / 5) % 5];
    w += c[(i + 2) % 5];
    w += 'a';
    return w;
  }
  return "w" + std::to_string(dialect) + "_" + std::to_string(i);
}

int role_offset(WordRole role) {
  switch (role) {
    case WordRole::kPrefix:
      return 0;
    case WordRole::kSubject:
      return Vocab::kPrefixWords;
    case WordRole::kVerb:
      return Vocab::kPrefixWords + Vocab::kSubjectWords;
    case WordRole::kStep:
      return Vocab::kPrefixWords + Vocab::kSubjectWords + Vocab::kVerbWords;
  }
  return 0;
}

int role_count(WordRole role) {
  switch (role) {
    case WordRole::kPrefix:
      return Vocab::kPrefixWords;
    case WordRole::kSubject:
      return Vocab::kSubjectWords;
    case WordRole::kVerb:
      return Vocab::kVerbWords;
    case WordRole::kStep:
      return Vocab::kStepWords;
  }
  return 0;
}

}  // namespace

Vocab::Vocab(int n_low_resource) {
  if (n_low_resource < 1) throw VocabError("at least one low-resource dialect is required");
  dialects_.push_back("H");
  for (int i = 1; i <= n_low_resource; ++i) dialects_.push_back("L" + std::to_string(i));
}

int Vocab::dialect_index(const std::string& name) const {
  for (std::size_t i = 0; i < dialects_.size(); ++i) {
    if (dialects_[i] == name) return static_cast<int>(i);
  }
  throw VocabError("unknown dialect '" + name + "'");
}

const std::string& Vocab::dialect_name(int index) const {
  if (index < 0 || index >= n_dialects()) throw VocabError("unknown dialect index " + std::to_string(index));
  return dialects_[static_cast<std::size_t>(index)];
}

int Vocab::word(int dialect, WordRole role, int i) const {
  if (dialect < 0 || dialect >= n_dialects()) throw VocabError("unknown dialect index " + std::to_string(dialect));
  if (i < 0 || i >= role_count(role)) throw VocabError("word index " + std::to_string(i) + " out of range");
  return tok::kFirstWord + dialect * kWordsPerDialect + role_offset(role) + i;
}

int Vocab::dialect_of(int id) const {
  if (!is_word(id)) return -1;
  return (id - tok::kFirstWord) / kWordsPerDialect;
}

std::pair<int, int> Vocab::partition(int dialect) const {
  const int lo = word(dialect, WordRole::kPrefix, 0);
  return {lo, lo + kWordsPerDialect};
}

std::vector<int> Vocab::think_prefix(int dialect) const {
  std::vector<int> out;
  for (int i = 0; i < kPrefixWords; ++i) out.push_back(word(dialect, WordRole::kPrefix, i));
  return out;
}

std::string Vocab::token_name(int id) const {
  if (id < 0 || id >= size()) throw VocabError("unknown token id " + std::to_string(id));
  if (id < tok::kDigit0) return kSpecialNames[static_cast<std::size_t>(id)];
  if (is_digit(id)) return std::string(1, static_cast<char>('0' + (id - tok::kDigit0)));
  if (id < tok::kFirstWord) return kOpNames[static_cast<std::size_t>(id - tok::kPlus)];
  const int d = dialect_of(id);
  const int i = (id - tok::kFirstWord) % kWordsPerDialect;
  return d == 0 ? kHighResourceWords[static_cast<std::size_t>(i)] : synthetic_word(d, i);
}

int Vocab::token_id(const std::string& name) const {
  // Built lazily per call site; vocabularies are tiny.
  static thread_local std::unordered_map<std::string, int> cache;
  static thread_local int cached_size = -1;
  if (cached_size != size()) {
    cache.clear();
    for (int id = 0; id < size(); ++id) cache.emplace(token_name(id), id);
    cached_size = size();
  }
  auto it = cache.find(name);
  if (it == cache.end()) throw VocabError("unknown token '" + name + "'");
  return it->second;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json j;
  j["size"] = size();
  j["special"] = {{"bos", tok::kBos},           {"eos", tok::kEos},         {"think_open", tok::kThinkOpen},
                  {"think_close", tok::kThinkClose}, {"box_open", tok::kBoxOpen}, {"box_close", tok::kBoxClose},
                  {"sep", tok::kSep},           {"newline", tok::kNewline}};
  j["shared"] = {{"digits", {tok::kDigit0, tok::kDigit0 + 9}},
                 {"plus", tok::kPlus},
                 {"minus", tok::kMinus},
                 {"times", tok::kTimes},
                 {"equals", tok::kEquals}};
  nlohmann::json parts = nlohmann::json::array();
  for (int d = 0; d < n_dialects(); ++d) {
    auto [lo, hi] = partition(d);
    nlohmann::json words = nlohmann::json::array();
    for (int id = lo; id < hi; ++id) words.push_back(token_name(id));
    parts.push_back({{"dialect", dialect_name(d)},
                     {"first_id", lo},
                     {"end_id", hi},
                     {"think_prefix", {lo, lo + 1, lo + 2, lo + 3}},
                     {"words", words}});
  }
  j["partitions"] = parts;
  return j;
}

int op_token(Op op) {
  switch (op) {
    case Op::kAdd:
      return tok::kPlus;
    case Op::kSub:
      return tok::kMinus;
    case Op::kMul:
      return tok::kTimes;
  }
  return tok::kPlus;
}

std::vector<int> encode_number(long value) {
  std::vector<int> out;
  if (value < 0) out.push_back(tok::kMinus);
  const std::string digits = std::to_string(value < 0 ? -value : value);
  for (char c : digits) out.push_back(tok::kDigit0 + (c - '0'));
  return out;
}

std::string decode(const Vocab& vocab, std::span<const int> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token_name(ids[i]);
  }
  return out;
}

std::vector<int> encode(const Vocab& vocab, const std::string& text) {
  std::istringstream in(text);
  std::vector<int> out;
  std::string name;
  while (in >> name) out.push_back(vocab.token_id(name));
  return out;
}

}  // namespace copsd
