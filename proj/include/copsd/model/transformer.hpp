// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "copsd/diffcore/adamw.hpp"
#include "copsd/diffcore/graph.hpp"
#include "json.hpp"

namespace copsd {

struct ModelConfig {
  int vocab_size = 128;
  int context_length = 320;
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ffn = 256;
  bool tie_embeddings = true;

  // Throws ConfigError on non-positive sizes or d_model % n_heads != 0.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Pre-layer-norm causal transformer with learned positions.
struct Model {
  ModelConfig config;
  ParameterSet params;
};

// (name, shape) in manifest order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);
// Closed form: V·d + C·d + L·(4d + 3d² + 3d + d² + d + 2·d·f + f + d) + 2d (+ d·V untied).
std::size_t expected_parameter_count(const ModelConfig& config);

// Weights and embeddings ~ N(0, 0.02²); biases and norm offsets 0; norm gains 1.
Model init_model(const ModelConfig& config, std::uint64_t seed);

// Parameters of one Model bound as leaves of a graph, in layout order.
struct BoundModel {
  const ModelConfig* config = nullptr;
  std::vector<Var> params;
};

// trainable = false binds frozen leaves: nothing upstream of them is ever
// differentiated. The Model must outlive the graph.
BoundModel bind(Graph& graph, const Model& model, bool trainable);

// Row n holds the logits of the token that follows tokens[n].
Var forward(const BoundModel& model, std::span<const int> tokens);
Array forward_logits(const Model& model, std::span<const int> tokens);

// Logit rows predicting each rollout token given context ++ rollout[<n],
// from one pass over the concatenation. Returns [|rollout|×V].
Var rollout_logits(const BoundModel& model, std::span<const int> context, std::span<const int> rollout);

// Log-distributions for rollout positions 1..|rollout|; an empty Array when
// the rollout is empty.
Array step_distributions(const Model& model, std::span<const int> context, std::span<const int> rollout);

void check_tokens(const ModelConfig& config, std::span<const int> tokens);

}  // namespace copsd
