// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/model/decoder.hpp"

#include <cmath>

#include "copsd/errors.hpp"

namespace copsd {
namespace {

void layer_norm_rows(const Array& x, const Array& g, const Array& b, Array& out) {
  const auto n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) = ((xr[j] - mu) * rs) * g[j] + b[j];
  }
}

void affine(const Array& x, const Array& w, const Array& b, Array& out) {
  out.fill(0.0);
  kernels::gemm_nn(x.data(), w.data(), out.data(), x.rows(), x.cols(), out.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(r, j) += b[j];
  }
}

}  // namespace

Decoder::Decoder(const Model& model) : model_(model) {
  const auto& c = model.config;
  c.validate();
  std::size_t k = 0;
  const auto& p = model.params;
  if (p.size() != parameter_layout(c).size()) throw ConfigError("parameter set does not match model config");
  wte_ = &p[k++].value;
  wpe_ = &p[k++].value;
  for (int l = 0; l < c.n_layers; ++l) {
    Layer L{};
    L.ln1_g = &p[k++].value;
    L.ln1_b = &p[k++].value;
    L.wqkv = &p[k++].value;
    L.bqkv = &p[k++].value;
    L.wo = &p[k++].value;
    L.bo = &p[k++].value;
    L.ln2_g = &p[k++].value;
    L.ln2_b = &p[k++].value;
    L.w1 = &p[k++].value;
    L.b1 = &p[k++].value;
    L.w2 = &p[k++].value;
    L.b2 = &p[k++].value;
    layers_.push_back(L);
  }
  lnf_g_ = &p[k++].value;
  lnf_b_ = &p[k++].value;
  if (c.tie_embeddings) {
    const auto V = wte_->shape()[0], d = wte_->shape()[1];
    head_storage_ = Array({d, V});
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t j = 0; j < d; ++j) head_storage_.at(j, v) = wte_->at(v, j);
    }
    head_ = &head_storage_;
  } else {
    head_ = &p[k].value;
  }
}

DecodeState Decoder::start() const {
  DecodeState s;
  const auto n = static_cast<std::size_t>(model_.config.context_length * model_.config.d_model);
  s.keys.assign(layers_.size(), std::vector<double>(n));
  s.values.assign(layers_.size(), std::vector<double>(n));
  return s;
}

void Decoder::step(std::span<DecodeState* const> states, std::span<const int> tokens, Array& logits) const {
  const auto& c = model_.config;
  const auto B = states.size();
  if (tokens.size() != B) throw DimensionError("decoder: one token per state required");
  if (B == 0) return;
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const auto H = static_cast<std::size_t>(c.n_heads);
  const auto hd = d / H;
  const auto f = static_cast<std::size_t>(c.d_ffn);
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));

  Array x({B, d});
  for (std::size_t b = 0; b < B; ++b) {
    const auto pos = states[b]->length;
    if (pos >= static_cast<std::size_t>(c.context_length)) {
      throw ContextError("decoder position " + std::to_string(pos) + " reaches context length " +
                         std::to_string(c.context_length));
    }
    if (tokens[b] < 0 || tokens[b] >= c.vocab_size) {
      throw VocabError("token id " + std::to_string(tokens[b]) + " outside vocabulary of " + std::to_string(V));
    }
    auto e = wte_->row(static_cast<std::size_t>(tokens[b]));
    auto q = wpe_->row(pos);
    for (std::size_t j = 0; j < d; ++j) x.at(b, j) = e[j] + q[j];
  }

  Array h({B, d}), qkv({B, 3 * d}), att({B, d}), proj({B, d}), mid({B, f});
  std::vector<double> s;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    layer_norm_rows(x, *L.ln1_g, *L.ln1_b, h);
    affine(h, *L.wqkv, *L.bqkv, qkv);
    att.fill(0.0);
    for (std::size_t b = 0; b < B; ++b) {
      auto& st = *states[b];
      const auto pos = st.length;
      double* kc = st.keys[l].data();
      double* vc = st.values[l].data();
      for (std::size_t j = 0; j < d; ++j) {
        kc[pos * d + j] = qkv.at(b, d + j);
        vc[pos * d + j] = qkv.at(b, 2 * d + j);
      }
      s.resize(pos + 1);
      for (std::size_t hh = 0; hh < H; ++hh) {
        const double* q = qkv.data() + b * 3 * d + hh * hd;
        double mx = -INFINITY;
        for (std::size_t t = 0; t <= pos; ++t) {
          const double* k = kc + t * d + hh * hd;
          double dot = 0.0;
          for (std::size_t cc = 0; cc < hd; ++cc) dot += q[cc] * k[cc];
          s[t] = dot * sc;
          mx = std::max(mx, s[t]);
        }
        double total = 0.0;
        for (std::size_t t = 0; t <= pos; ++t) {
          s[t] = std::exp(s[t] - mx);
          total += s[t];
        }
        double* o = att.data() + b * d + hh * hd;
        for (std::size_t t = 0; t <= pos; ++t) {
          const double p = s[t] / total;
          const double* v = vc + t * d + hh * hd;
          for (std::size_t cc = 0; cc < hd; ++cc) o[cc] += p * v[cc];
        }
      }
    }
    affine(att, *L.wo, *L.bo, proj);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];

    layer_norm_rows(x, *L.ln2_g, *L.ln2_b, h);
    affine(h, *L.w1, *L.b1, mid);
    constexpr double kc0 = 0.7978845608028654;
    constexpr double kc1 = 0.044715;
    for (auto& v : mid.values()) v = 0.5 * v * (1.0 + std::tanh(kc0 * (v + kc1 * v * v * v)));
    affine(mid, *L.w2, *L.b2, proj);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
  }
  for (std::size_t b = 0; b < B; ++b) states[b]->length += 1;

  layer_norm_rows(x, *lnf_g_, *lnf_b_, h);
  if (logits.shape() != Shape{B, V}) logits = Array({B, V});
  logits.fill(0.0);
  kernels::gemm_nn(h.data(), head_->data(), logits.data(), B, d, V);
}

std::vector<double> Decoder::prefill(DecodeState& state, std::span<const int> prompt) const {
  if (prompt.empty()) throw ContextError("empty prompt");
  Array logits;
  DecodeState* ptr = &state;
  for (int t : prompt) step(std::span<DecodeState* const>(&ptr, 1), std::span<const int>(&t, 1), logits);
  return std::vector<double>(logits.values().begin(), logits.values().end());
}

}  // namespace copsd
