// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copsd/diffcore/array.hpp"

namespace copsd {

struct NamedArray {
  std::string name;
  Array value;
};

// Ordered, named parameter arrays. Order defines the checkpoint manifest.
using ParameterSet = std::vector<NamedArray>;

const Array& find_parameter(const ParameterSet& params, const std::string& name);
std::size_t parameter_count(const ParameterSet& params);

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
};

// Decoupled weight decay Adam:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   w <- w - lr (m_hat / (sqrt(v_hat) + eps) + wd w)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  // Throws TrainingError naming the parameter if a gradient is not finite,
  // DimensionError on any shape disagreement. Parameters are untouched on error.
  void step(ParameterSet& params, const std::vector<Array>& grads);

  const AdamWConfig& config() const { return config_; }
  AdamWConfig& config() { return config_; }
  const OptimizerState& state() const { return state_; }

 private:
  AdamWConfig config_;
  OptimizerState state_;
};

}  // namespace copsd
