// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/diffcore/adamw.hpp"

#include <cmath>

#include "copsd/errors.hpp"

namespace copsd {

const Array& find_parameter(const ParameterSet& params, const std::string& name) {
  for (const auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw ParameterError("no parameter named '" + name + "'");
}

std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

void AdamW::step(ParameterSet& params, const std::vector<Array>& grads) {
  if (grads.size() != params.size()) {
    throw DimensionError("adamw: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape()) {
      throw DimensionError("adamw: gradient " + shape_string(grads[i].shape()) + " vs parameter '" +
                           params[i].name + "' " + shape_string(params[i].value.shape()));
    }
    if (!grads[i].all_finite()) throw TrainingError("non-finite gradient in parameter '" + params[i].name + "'");
  }
  if (state_.first_moment.empty()) {
    for (const auto& p : params) {
      state_.first_moment.push_back(Array::zeros_like(p.value));
      state_.second_moment.push_back(Array::zeros_like(p.value));
    }
  } else if (state_.first_moment.size() != params.size()) {
    throw DimensionError("adamw: optimizer state was built for a different parameter set");
  }

  state_.step += 1;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params[i].value.data();
    const double* g = grads[i].data();
    double* m = state_.first_moment[i].data();
    double* v = state_.second_moment[i].data();
    const std::size_t n = params[i].value.size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * w[j]);
    }
  }
}

}  // namespace copsd
