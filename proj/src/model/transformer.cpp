// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/model/transformer.hpp"

#include <algorithm>

#include "copsd/diffcore/rng.hpp"
#include "copsd/errors.hpp"

namespace copsd {

void ModelConfig::validate() const {
  if (vocab_size <= 0 || context_length <= 0 || n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ffn <= 0) {
    throw ConfigError("model config sizes must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"context_length", c.context_length},
                     {"n_layers", c.n_layers},     {"d_model", c.d_model},
                     {"n_heads", c.n_heads},       {"d_ffn", c.d_ffn},
                     {"tie_embeddings", c.tie_embeddings}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* kKeys[] = {"vocab_size", "context_length", "n_layers", "d_model",
                                "n_heads",    "d_ffn",          "tie_embeddings"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown model config key '" + key + "'");
    }
  }
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.context_length = j.value("context_length", c.context_length);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ffn = j.value("d_ffn", c.d_ffn);
  c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  c.validate();
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const auto C = static_cast<std::size_t>(c.context_length);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.d_ffn);
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("wte", Shape{V, d});
  out.emplace_back("wpe", Shape{C, d});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.g", Shape{d});
    out.emplace_back(p + "ln1.b", Shape{d});
    out.emplace_back(p + "attn.wqkv", Shape{d, 3 * d});
    out.emplace_back(p + "attn.bqkv", Shape{3 * d});
    out.emplace_back(p + "attn.wo", Shape{d, d});
    out.emplace_back(p + "attn.bo", Shape{d});
    out.emplace_back(p + "ln2.g", Shape{d});
    out.emplace_back(p + "ln2.b", Shape{d});
    out.emplace_back(p + "mlp.w1", Shape{d, f});
    out.emplace_back(p + "mlp.b1", Shape{f});
    out.emplace_back(p + "mlp.w2", Shape{f, d});
    out.emplace_back(p + "mlp.b2", Shape{d});
  }
  out.emplace_back("lnf.g", Shape{d});
  out.emplace_back("lnf.b", Shape{d});
  if (!c.tie_embeddings) out.emplace_back("lm_head", Shape{d, V});
  return out;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t V = c.vocab_size, C = c.context_length, d = c.d_model, f = c.d_ffn, L = c.n_layers;
  const std::size_t per_layer = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
  return V * d + C * d + L * per_layer + 2 * d + (c.tie_embeddings ? 0 : d * V);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  Model model{config, {}};
  Rng rng(seed);
  for (auto& [name, shape] : parameter_layout(config)) {
    Array a(shape);
    if (ends_with(name, ".g")) {
      a.fill(1.0);
    } else if (shape.size() == 2) {
      for (auto& v : a.values()) v = 0.02 * rng.normal();
    }
    model.params.push_back({name, std::move(a)});
  }
  return model;
}

BoundModel bind(Graph& graph, const Model& model, bool trainable) {
  BoundModel b{&model.config, {}};
  b.params.reserve(model.params.size());
  for (const auto& p : model.params) b.params.push_back(graph.leaf_ref(p.value, trainable));
  return b;
}

void check_tokens(const ModelConfig& config, std::span<const int> tokens) {
  if (tokens.empty()) throw ContextError("empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(config.context_length)) {
    throw ContextError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds context length " +
                       std::to_string(config.context_length));
  }
  for (int t : tokens) {
    if (t < 0 || t >= config.vocab_size) {
      throw VocabError("token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(config.vocab_size));
    }
  }
}

Var forward(const BoundModel& m, std::span<const int> tokens) {
  const auto& c = *m.config;
  check_tokens(c, tokens);
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  std::size_t k = 0;
  const Var wte = m.params[k++];
  const Var wpe = m.params[k++];
  Var x = add(embedding(wte, tokens), embedding(wpe, positions));
  for (int l = 0; l < c.n_layers; ++l) {
    const Var ln1_g = m.params[k++], ln1_b = m.params[k++];
    const Var wqkv = m.params[k++], bqkv = m.params[k++];
    const Var wo = m.params[k++], bo = m.params[k++];
    const Var ln2_g = m.params[k++], ln2_b = m.params[k++];
    const Var w1 = m.params[k++], b1 = m.params[k++];
    const Var w2 = m.params[k++], b2 = m.params[k++];

    Var h = layer_norm(x, ln1_g, ln1_b);
    Var qkv = add_row(matmul(h, wqkv), bqkv);
    Var att = causal_self_attention(qkv, static_cast<std::size_t>(c.n_heads));
    x = add(x, add_row(matmul(att, wo), bo));

    h = layer_norm(x, ln2_g, ln2_b);
    h = gelu(add_row(matmul(h, w1), b1));
    x = add(x, add_row(matmul(h, w2), b2));
  }
  const Var lnf_g = m.params[k++], lnf_b = m.params[k++];
  x = layer_norm(x, lnf_g, lnf_b);
  if (c.tie_embeddings) return matmul_nt(x, wte);
  return matmul(x, m.params[k]);
}

Array forward_logits(const Model& model, std::span<const int> tokens) {
  Graph g;
  auto bound = bind(g, model, /*trainable=*/false);
  return forward(bound, tokens).value();
}

Var rollout_logits(const BoundModel& m, std::span<const int> context, std::span<const int> rollout) {
  if (context.empty()) throw ContextError("rollout_logits needs a non-empty context");
  if (rollout.empty()) throw ContextError("rollout_logits needs a non-empty rollout");
  if (context.size() + rollout.size() > static_cast<std::size_t>(m.config->context_length)) {
    throw ContextError("context of " + std::to_string(context.size()) + " plus rollout of " +
                       std::to_string(rollout.size()) + " tokens exceeds context length " +
                       std::to_string(m.config->context_length));
  }
  std::vector<int> seq(context.begin(), context.end());
  seq.insert(seq.end(), rollout.begin(), rollout.end() - 1);
  Var logits = forward(m, seq);
  return slice_rows(logits, context.size() - 1, rollout.size());
}

Array step_distributions(const Model& model, std::span<const int> context, std::span<const int> rollout) {
  if (rollout.empty()) {
    std::vector<int> seq(context.begin(), context.end());
    check_tokens(model.config, seq);
    return Array();
  }
  Graph g;
  auto bound = bind(g, model, false);
  return log_softmax(rollout_logits(bound, context, rollout).value());
}

}  // namespace copsd
