// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "copsd/diffcore/rng.hpp"
#include "copsd/errors.hpp"
#include "copsd/model/checkpoint.hpp"
#include "copsd/model/decoder.hpp"
#include "copsd/model/sampler.hpp"
#include "copsd/model/training.hpp"
#include "copsd/model/transformer.hpp"
#include "doctest.h"
#include "fd_checks.hpp"

using namespace copsd;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 20;
  c.context_length = 48;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_heads = 4;
  c.d_ffn = 32;
  return c;
}

// A model whose outputs are far from uniform so sampling paths differ.
Model sharp_model(std::uint64_t seed) {
  auto m = init_model(small_config(), seed);
  Rng rng(seed + 100);
  for (auto& p : m.params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.3 * rng.normal();
  }
  return m;
}

std::vector<int> random_tokens(Rng& rng, std::size_t n, int vocab) {
  std::vector<int> t(n);
  for (auto& v : t) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
  return t;
}

// Independent count: per-parameter-array enumeration of the model layout.
std::size_t count_by_hand(const ModelConfig& c) {
  const std::size_t V = c.vocab_size, C = c.context_length, d = c.d_model, f = c.d_ffn;
  std::size_t per_layer = 0;
  per_layer += 2 * d;              // ln1
  per_layer += d * 3 * d + 3 * d;  // qkv
  per_layer += d * d + d;          // attn out
  per_layer += 2 * d;              // ln2
  per_layer += d * f + f;          // ffn in
  per_layer += f * d + d;          // ffn out
  std::size_t total = V * d + C * d + c.n_layers * per_layer + 2 * d;
  if (!c.tie_embeddings) total += d * V;
  return total;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("copsd_test_" + name); }

}  // namespace

TEST_CASE("config validation") {
  auto c = small_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.d_model = 0;
  CHECK_THROWS_AS(init_model(c, 1), ConfigError);
}

TEST_CASE("init is deterministic and seed sensitive") {
  const auto a = init_model(small_config(), 5);
  const auto b = init_model(small_config(), 5);
  const auto c = init_model(small_config(), 6);
  REQUIRE(a.params.size() == b.params.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(std::memcmp(a.params[i].value.data(), b.params[i].value.data(), a.params[i].value.size() * 8) == 0);
    any_diff = any_diff || !(a.params[i].value == c.params[i].value);
  }
  CHECK(any_diff);
}

TEST_CASE("init distribution: weights N(0, 0.02^2), zero biases, unit gains") {
  ModelConfig c;  // defaults
  const auto m = init_model(c, 3);
  for (const auto& p : m.params) {
    CAPTURE(p.name);
    double s = 0, s2 = 0;
    for (double v : p.value.values()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(p.value.size());
    const bool is_norm = p.name.find("ln") != std::string::npos;
    const bool is_gain = is_norm && (p.name.find(".g") != std::string::npos || p.name.find("gain") != std::string::npos);
    if (p.value.rank() == 1) {
      CHECK(s2 == doctest::Approx(is_gain ? n : 0.0));
    } else if (n > 1000) {
      CHECK(std::abs(std::sqrt(s2 / n) - 0.02) < 0.002);
      CHECK(std::abs(s / n) < 0.002);
    }
  }
}

TEST_CASE("parameter count matches the closed form for the default config") {
  ModelConfig c;
  c.vocab_size = 128;
  const auto m = init_model(c, 1);
  CHECK(parameter_count(m.params) == count_by_hand(c));
  CHECK(expected_parameter_count(c) == count_by_hand(c));
  std::size_t from_layout = 0;
  for (const auto& [name, shape] : parameter_layout(c)) from_layout += shape_size(shape);
  CHECK(from_layout == count_by_hand(c));
  c.tie_embeddings = false;
  CHECK(parameter_count(init_model(c, 1).params) == count_by_hand(c));
}

TEST_CASE("forward errors") {
  const auto m = init_model(small_config(), 1);
  std::vector<int> too_long(49, 2);
  CHECK_THROWS_AS(forward_logits(m, too_long), ContextError);
  const std::vector<int> bad = {1, 20};
  CHECK_THROWS_AS(forward_logits(m, bad), VocabError);
  const std::vector<int> negative = {-1};
  CHECK_THROWS_AS(forward_logits(m, negative), VocabError);
}

TEST_CASE("property: causal masking is exact") {
  const auto m = sharp_model(2);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto tokens = random_tokens(rng, 12, 20);
    const auto base = forward_logits(m, tokens);
    const auto j = rng.below(12);
    tokens[j] = (tokens[j] + 1 + static_cast<int>(rng.below(19))) % 20;
    const auto changed = forward_logits(m, tokens);
    for (std::size_t r = 0; r < j; ++r) {
      for (std::size_t c = 0; c < 20; ++c) REQUIRE(base.at(r, c) == changed.at(r, c));
    }
    bool differs = false;
    for (std::size_t c = 0; c < 20; ++c) differs = differs || base.at(j, c) != changed.at(j, c);
    CHECK(differs);
  }
}

TEST_CASE("prefix forward equals the corresponding rows of a longer forward") {
  const auto m = sharp_model(3);
  Rng rng(1);
  const auto tokens = random_tokens(rng, 10, 20);
  const auto full = forward_logits(m, tokens);
  const auto prefix = forward_logits(m, std::span<const int>(tokens).first(6));
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 20; ++c) CHECK(std::abs(full.at(r, c) - prefix.at(r, c)) <= 1e-9);
  }
  const auto ls = log_softmax(full);
  for (std::size_t r = 0; r < ls.rows(); ++r) {
    double s = 0;
    for (double v : ls.row(r)) s += std::exp(v);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("decoder cache matches the graph forward") {
  const auto m = sharp_model(4);
  Rng rng(2);
  const auto tokens = random_tokens(rng, 15, 20);
  const auto full = forward_logits(m, tokens);
  const Decoder dec(m);
  auto state = dec.start();
  const auto first = dec.prefill(state, std::span<const int>(tokens).first(5));
  for (std::size_t c = 0; c < 20; ++c) CHECK(std::abs(first[c] - full.at(4, c)) <= 1e-9);
  Array logits;
  for (std::size_t i = 5; i < tokens.size(); ++i) {
    DecodeState* s[] = {&state};
    const int t[] = {tokens[i]};
    dec.step(s, t, logits);
    for (std::size_t c = 0; c < 20; ++c) CHECK(std::abs(logits.at(0, c) - full.at(i, c)) <= 1e-9);
  }
}

TEST_CASE("step_distributions") {
  const auto m = sharp_model(5);
  const std::vector<int> ctx = {0, 4, 9, 2};
  const std::vector<int> roll = {7, 3, 3, 1};
  CHECK(step_distributions(m, ctx, std::span<const int>()).empty());
  const auto d = step_distributions(m, ctx, roll);
  REQUIRE(d.rows() == roll.size());
  const auto first = log_softmax(forward_logits(m, ctx));
  for (std::size_t c = 0; c < 20; ++c) CHECK(std::abs(d.at(0, c) - first.at(3, c)) <= 1e-9);
  // Incremental recomputation of each position.
  std::vector<int> seq = ctx;
  for (std::size_t n = 0; n < roll.size(); ++n) {
    const auto lp = log_softmax(forward_logits(m, seq));
    double s = 0;
    for (std::size_t c = 0; c < 20; ++c) {
      CHECK(std::abs(d.at(n, c) - lp.at(seq.size() - 1, c)) <= 1e-9);
      s += std::exp(d.at(n, c));
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
    seq.push_back(roll[n]);
  }
  std::vector<int> long_roll(45, 3);
  CHECK_THROWS_AS(step_distributions(m, ctx, long_roll), ContextError);
}

TEST_CASE("nucleus truncation hand case") {
  const double probs[] = {0.5, 0.3, 0.15, 0.05};
  const auto kept = nucleus_keep(probs, 0.8);
  REQUIRE(kept == std::vector<int>{0, 1});
  const double mass = probs[0] + probs[1];
  CHECK(std::abs(probs[0] / mass - 0.625) <= 1e-12);
  CHECK(std::abs(probs[1] / mass - 0.375) <= 1e-12);
}

TEST_CASE("property: nucleus keeps at least one token and breaks ties by id") {
  const double top_heavy[] = {0.05, 0.9, 0.05};
  CHECK(nucleus_keep(top_heavy, 0.5) == std::vector<int>{1});
  CHECK(nucleus_keep(top_heavy, 1e-9) == std::vector<int>{1});
  const double ties[] = {0.25, 0.25, 0.25, 0.25};
  CHECK(nucleus_keep(ties, 0.5) == std::vector<int>{0, 1});
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(1 + rng.below(30));
    double s = 0;
    for (auto& v : p) s += (v = rng.uniform());
    for (auto& v : p) v /= s;
    const double top_p = 0.01 + 0.99 * rng.uniform();
    const auto kept = nucleus_keep(p, top_p);
    REQUIRE(!kept.empty());
    double mass = 0;
    for (int id : kept) mass += p[static_cast<std::size_t>(id)];
    CHECK(mass >= top_p - 1e-12);
    double without_last = mass - p[static_cast<std::size_t>(kept.back())];
    CHECK(without_last < top_p);
  }
}

TEST_CASE("sampling parameter validation") {
  const auto m = init_model(small_config(), 1);
  const std::vector<int> prompt = {0, 2};
  SamplingParams p;
  p.temperature = 0;
  CHECK_THROWS_AS(sample_sequence(m, prompt, p, 1), ParameterError);
  p = SamplingParams{};
  p.top_p = 0;
  CHECK_THROWS_AS(sample_sequence(m, prompt, p, 1), ParameterError);
  p = SamplingParams{};
  p.budget = 0;
  CHECK_THROWS_AS(sample_sequence(m, prompt, p, 1), ParameterError);
  p = SamplingParams{};
  p.budget = 47;
  CHECK_THROWS_AS(sample_sequence(m, prompt, p, 1), ContextError);
}

TEST_CASE("greedy sampling is argmax and deterministic") {
  const auto m = sharp_model(7);
  const std::vector<int> prompt = {0, 5, 6};
  SamplingParams p;
  p.temperature = 1e-9;
  p.budget = 10;
  const auto a = sample_sequence(m, prompt, p, 1);
  const auto b = sample_sequence(m, prompt, p, 999);
  CHECK(a.tokens == b.tokens);
  std::vector<int> seq = prompt;
  for (int tok : a.tokens) {
    const auto logits = forward_logits(m, seq);
    const auto row = logits.row(seq.size() - 1);
    CHECK(tok == static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    seq.push_back(tok);
  }
}

TEST_CASE("property: rollouts respect budget, eos and log-probability contracts") {
  const auto m = sharp_model(8);
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    auto prompt = random_tokens(rng, 1 + rng.below(6), 20);
    SamplingParams p;
    p.temperature = 0.5 + rng.uniform();
    p.top_p = 0.3 + 0.7 * rng.uniform();
    p.budget = 1 + static_cast<int>(rng.below(20));
    p.eos_token = 1;
    const auto r = sample_sequence(m, prompt, p, rng.next_u64());
    CHECK(r.prompt == prompt);
    CHECK(r.tokens.size() <= static_cast<std::size_t>(p.budget));
    CHECK(r.logprobs.size() == r.tokens.size());
    for (double lp : r.logprobs) CHECK((std::isfinite(lp) && lp <= 0.0));
    const auto eos_at = std::find(r.tokens.begin(), r.tokens.end(), 1);
    if (r.terminated_by == Termination::kEos) {
      CHECK(eos_at == r.tokens.end() - 1);
    } else {
      CHECK(eos_at == r.tokens.end());
      CHECK(r.tokens.size() == static_cast<std::size_t>(p.budget));
    }
  }
}

TEST_CASE("sampling is reproducible and group and batch decoding agree with single decoding") {
  const auto m = sharp_model(9);
  SamplingParams p;
  p.temperature = 1.1;
  p.top_p = 0.9;
  p.budget = 16;
  const std::vector<int> prompt = {0, 3, 4};
  const std::uint64_t seeds[] = {11, 12, 13, 14};
  const auto group = sample_group(m, prompt, p, seeds);
  std::vector<std::vector<int>> prompts = {{0, 3, 4}, {0, 9}, {0, 3, 4, 5, 6}, {2}};
  const auto batch = sample_batch(m, prompts, p, seeds);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto single = sample_sequence(m, prompt, p, seeds[i]);
    CHECK(group[i].tokens == single.tokens);
    CHECK(group[i].logprobs == single.logprobs);
    CHECK(sample_sequence(m, prompt, p, seeds[i]).tokens == single.tokens);
    const auto b = sample_sequence(m, prompts[i], p, seeds[i]);
    CHECK(batch[i].tokens == b.tokens);
    CHECK(batch[i].logprobs == b.logprobs);
  }
}

TEST_CASE("sampled log-probabilities match the truncated distribution") {
  const auto m = sharp_model(10);
  SamplingParams p;
  p.temperature = 0.8;
  p.top_p = 0.7;
  p.budget = 8;
  const std::vector<int> prompt = {0, 2, 3};
  const auto r = sample_sequence(m, prompt, p, 77);
  std::vector<int> seq = prompt;
  for (std::size_t n = 0; n < r.tokens.size(); ++n) {
    const auto logits = forward_logits(m, seq);
    std::vector<double> row(logits.row(seq.size() - 1).begin(), logits.row(seq.size() - 1).end());
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (auto& v : row) z += (v = std::exp((v - mx) / p.temperature));
    for (auto& v : row) v /= z;
    const auto kept = nucleus_keep(row, p.top_p);
    double mass = 0;
    for (int id : kept) mass += row[static_cast<std::size_t>(id)];
    CHECK(std::find(kept.begin(), kept.end(), r.tokens[n]) != kept.end());
    CHECK(std::abs(r.logprobs[n] - std::log(row[static_cast<std::size_t>(r.tokens[n])] / mass)) <= 1e-9);
    seq.push_back(r.tokens[n]);
  }
}

TEST_CASE("checkpoint round trip") {
  auto m = sharp_model(11);
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(m, 35, path);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.step_tag == 35);
  CHECK(loaded.model.config == m.config);
  auto expected = m;
  quantize_to_disk_precision(expected);
  REQUIRE(loaded.model.params.size() == expected.params.size());
  for (std::size_t i = 0; i < expected.params.size(); ++i) {
    CHECK(loaded.model.params[i].name == expected.params[i].name);
    CHECK(std::memcmp(loaded.model.params[i].value.data(), expected.params[i].value.data(),
                      expected.params[i].value.size() * 8) == 0);
  }
  // A loaded model re-encodes to the same bytes.
  CHECK(encode_checkpoint(loaded.model, 35) == encode_checkpoint(m, 35));
  fs::remove(path);
}

TEST_CASE("checkpoint header is length-prefixed JSON with contiguous offsets") {
  const auto m = init_model(small_config(), 1);
  const auto bytes = encode_checkpoint(m, 5);
  REQUIRE(bytes.size() > 12);
  CHECK(std::memcmp(bytes.data(), kCheckpointMagic, 8) == 0);
  const std::uint32_t n = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (static_cast<std::uint32_t>(bytes[11]) << 24);
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + n);
  std::size_t expect_offset = 0;
  for (const auto& e : header.at("manifest")) {
    CHECK(e.at("offset").get<std::size_t>() == expect_offset);
    std::size_t count = 1;
    for (auto d : e.at("shape")) count *= d.get<std::size_t>();
    expect_offset += 4 * count;
  }
  CHECK(expect_offset == bytes.size() - 12 - n);
  CHECK(expect_offset == 4 * parameter_count(m.params));
}

TEST_CASE("checkpoint load errors") {
  const auto m = init_model(small_config(), 1);
  const auto bytes = encode_checkpoint(m, 0);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_checkpoint(bad_magic);
    FAIL("expected magic mismatch");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kMagicMismatch);
  }

  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  try {
    decode_checkpoint(truncated);
    FAIL("expected truncation");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kTruncated);
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
    CHECK(msg.find(std::to_string(bytes.size() - 4)) != std::string::npos);
  }

  // Shrink one manifest shape while keeping the header the same length.
  const std::uint32_t n = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (static_cast<std::uint32_t>(bytes[11]) << 24);
  std::string header(bytes.begin() + 12, bytes.begin() + 12 + n);
  const auto pos = header.find("[20,16]");
  REQUIRE(pos != std::string::npos);
  header.replace(pos, 7, "[19,16]");
  auto mismatched = bytes;
  std::copy(header.begin(), header.end(), mismatched.begin() + 12);
  try {
    decode_checkpoint(mismatched);
    FAIL("expected manifest mismatch");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kManifestMismatch);
  }
}

TEST_CASE("training helpers") {
  std::vector<Array> g = {Array({2}, {3, 0}), Array({1}, {4})};
  CHECK(grad_norm(g) == doctest::Approx(5.0));
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(grad_norm(g) == doctest::Approx(1.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(warmup_cosine_lr(1.0, 0, 10, 100, 0.1) == doctest::Approx(0.1));
  CHECK(warmup_cosine_lr(1.0, 9, 10, 100, 0.1) == doctest::Approx(1.0));
  CHECK(warmup_cosine_lr(1.0, 99, 10, 100, 0.1) == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("next-token loss of a uniform model is log V") {
  auto m = init_model(small_config(), 1);
  for (auto& p : m.params) p.value.fill(0.0);
  for (auto& p : m.params) {
    if (p.name.find("ln") != std::string::npos && p.name.find(".g") != std::string::npos) p.value.fill(1.0);
  }
  Graph g;
  const std::vector<int> tokens = {0, 3, 5, 7, 1};
  auto bound = bind(g, m, true);
  CHECK(next_token_loss(bound, tokens).value().item() == doctest::Approx(std::log(20.0)).epsilon(1e-12));
}
