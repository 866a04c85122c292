// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <span>
#include <vector>

#include "copsd/model/transformer.hpp"

namespace copsd {

// Per-sequence key/value cache for incremental inference.
struct DecodeState {
  std::vector<std::vector<double>> keys;    // [layer][pos * d]
  std::vector<std::vector<double>> values;  // [layer][pos * d]
  std::size_t length = 0;
};

// Inference-only incremental forward pass. Produces the same logits as
// forward_logits (to rounding) at O(T) cost per token instead of O(T²).
class Decoder {
 public:
  explicit Decoder(const Model& model);

  DecodeState start() const;
  // Feeds one token to each state and writes one logits row per state into
  // `logits` ([batch×V]). States may sit at different positions.
  void step(std::span<DecodeState* const> states, std::span<const int> tokens, Array& logits) const;
  // Feeds a whole prompt; returns the logits row after its last token.
  std::vector<double> prefill(DecodeState& state, std::span<const int> prompt) const;

  const Model& model() const { return model_; }

 private:
  struct Layer {
    const Array* ln1_g;
    const Array* ln1_b;
    const Array* wqkv;
    const Array* bqkv;
    const Array* wo;
    const Array* bo;
    const Array* ln2_g;
    const Array* ln2_b;
    const Array* w1;
    const Array* b1;
    const Array* w2;
    const Array* b2;
  };

  const Model& model_;
  const Array* wte_;
  const Array* wpe_;
  const Array* lnf_g_;
  const Array* lnf_b_;
  const Array* head_;  // [d×V]; transposed copy of wte_ when tied
  Array head_storage_;
  std::vector<Layer> layers_;
};

}  // namespace copsd
