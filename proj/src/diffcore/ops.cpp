// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "copsd/diffcore/graph.hpp"
#include "copsd/errors.hpp"

namespace copsd {
namespace {

void require_matrix(const Array& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ParameterError("temperature must be positive, got " + std::to_string(t));
}

double row_max(std::span<const double> row) { return *std::max_element(row.begin(), row.end()); }

}  // namespace

// ---- plain helpers -----------------------------------------------------------

void softmax_row(std::span<const double> in, std::span<double> out, double temperature) {
  require_temperature(temperature);
  const double mx = row_max(in);
  double total = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp((in[j] - mx) / temperature);
    total += out[j];
  }
  for (auto& v : out) v /= total;
}

void log_softmax_row(std::span<const double> in, std::span<double> out, double temperature) {
  require_temperature(temperature);
  const double mx = row_max(in);
  double total = 0.0;
  for (double v : in) total += std::exp((v - mx) / temperature);
  const double lse = std::log(total);
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mx) / temperature - lse;
}

Array softmax(const Array& logits, double temperature) {
  require_temperature(temperature);
  Array out = Array::zeros_like(logits);
  for (std::size_t r = 0; r < logits.rows(); ++r) softmax_row(logits.row(r), out.row(r), temperature);
  return out;
}

Array log_softmax(const Array& logits, double temperature) {
  require_temperature(temperature);
  Array out = Array::zeros_like(logits);
  for (std::size_t r = 0; r < logits.rows(); ++r) log_softmax_row(logits.row(r), out.row(r), temperature);
  return out;
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  const auto m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
  if (B.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(A.shape()) + " x " +
                         shape_string(B.shape()));
  }
  Array out({m, n});
  kernels::gemm_nn(A.data(), B.data(), out.data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return a.graph().add_node(OpKind::kMatmul, {a, b}, std::move(out), [ia, ib, m, k, n](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* da = g.accum(ia)) kernels::gemm_nt(G.data(), g.value(ib).data(), da->data(), m, n, k);
    if (auto* db = g.accum(ib)) kernels::gemm_tn(g.value(ia).data(), G.data(), db->data(), k, m, n);
  });
}

Var matmul_nt(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_matrix(A, "matmul_nt");
  require_matrix(B, "matmul_nt");
  const auto m = A.shape()[0], k = A.shape()[1], n = B.shape()[0];
  if (B.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_string(A.shape()) + " x " +
                         shape_string(B.shape()) + "^T");
  }
  Array out({m, n});
  kernels::gemm_nt(A.data(), B.data(), out.data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return a.graph().add_node(OpKind::kMatmulNT, {a, b}, std::move(out),
                            [ia, ib, m, k, n](Graph& g, std::uint32_t self) {
                              const auto& G = g.upstream(self);
                              // dA = G·B, dB = Gᵀ·A
                              if (auto* da = g.accum(ia)) kernels::gemm_nn(G.data(), g.value(ib).data(), da->data(), m, n, k);
                              if (auto* db = g.accum(ib)) kernels::gemm_tn(G.data(), g.value(ia).data(), db->data(), n, m, k);
                            });
}

// ---- elementwise ---------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Array out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().add_node(OpKind::kAdd, {a, b}, std::move(out), [ia, ib](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    for (auto id : {ia, ib}) {
      if (auto* d = g.accum(id)) {
        for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Array out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().add_node(OpKind::kSub, {a, b}, std::move(out), [ia, ib](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i];
    }
    if (auto* d = g.accum(ib)) {
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] -= G[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Array out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().add_node(OpKind::kMul, {a, b}, std::move(out), [ia, ib](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      const auto& B = g.value(ib);
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] * B[i];
    }
    if (auto* d = g.accum(ib)) {
      const auto& A = g.value(ia);
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  Array out = a.value();
  for (auto& v : out.values()) v *= s;
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kScale, {a}, std::move(out), [ia, s](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] * s;
    }
  });
}

Var add_row(Var a, Var bias) {
  const auto& A = a.value();
  const auto& b = bias.value();
  if (b.size() != A.cols()) {
    throw DimensionError("add_row: bias " + shape_string(b.shape()) + " vs rows of " + shape_string(A.shape()));
  }
  Array out = A;
  const auto n = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) += b[j];
  }
  const auto ia = a.id(), ib = bias.id();
  return a.graph().add_node(OpKind::kAddRow, {a, bias}, std::move(out), [ia, ib, n](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i];
    }
    if (auto* d = g.accum(ib)) {
      for (std::size_t r = 0; r < G.rows(); ++r) {
        for (std::size_t j = 0; j < n; ++j) (*d)[j] += G.at(r, j);
      }
    }
  });
}

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  Array out = a.value();
  for (auto& x : out.values()) x = 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kGelu, {a}, std::move(out), [ia](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    auto* d = g.accum(ia);
    if (!d) return;
    const auto& X = g.value(ia);
    for (std::size_t i = 0; i < G.size(); ++i) {
      const double x = X[i];
      const double t = std::tanh(c * (x + k * x * x * x));
      const double dt = (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
      (*d)[i] += G[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Var exp(Var a) {
  Array out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kExp, {a}, std::move(out), [ia](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    const auto& Y = g.value(self);
    if (auto* d = g.accum(ia)) {
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] * Y[i];
    }
  });
}

Var log(Var a) {
  Array out = a.value();
  for (auto& v : out.values()) v = std::log(v);
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kLog, {a}, std::move(out), [ia](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    const auto& X = g.value(ia);
    if (auto* d = g.accum(ia)) {
      for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] / X[i];
    }
  });
}

// ---- reductions ----------------------------------------------------------------

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kSum, {a}, Array::scalar(total), [ia](Graph& g, std::uint32_t self) {
    const double G = g.upstream(self)[0];
    if (auto* d = g.accum(ia)) {
      for (auto& v : d->values()) v += G;
    }
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kMean, {a}, Array::scalar(total / n), [ia, n](Graph& g, std::uint32_t self) {
    const double G = g.upstream(self)[0] / n;
    if (auto* d = g.accum(ia)) {
      for (auto& v : d->values()) v += G;
    }
  });
}

Var sum_rows(Var a) {
  const auto& A = a.value();
  Array out({A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double t = 0.0;
    for (double v : A.row(r)) t += v;
    out[r] = t;
  }
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kSumRows, {a}, std::move(out), [ia](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      for (std::size_t r = 0; r < d->rows(); ++r) {
        for (auto& v : d->row(r)) v += G[r];
      }
    }
  });
}

// ---- normalizations ------------------------------------------------------------

Var softmax(Var logits, double temperature) {
  Array out = softmax(logits.value(), temperature);
  const auto ia = logits.id();
  return logits.graph().add_node(OpKind::kSoftmax, {logits}, std::move(out),
                                 [ia, temperature](Graph& g, std::uint32_t self) {
                                   const auto& G = g.upstream(self);
                                   const auto& P = g.value(self);
                                   auto* d = g.accum(ia);
                                   if (!d) return;
                                   for (std::size_t r = 0; r < P.rows(); ++r) {
                                     auto p = P.row(r);
                                     auto gr = G.row(r);
                                     double dot = 0.0;
                                     for (std::size_t j = 0; j < p.size(); ++j) dot += gr[j] * p[j];
                                     auto dr = d->row(r);
                                     for (std::size_t j = 0; j < p.size(); ++j) dr[j] += p[j] * (gr[j] - dot) / temperature;
                                   }
                                 });
}

Var log_softmax(Var logits, double temperature) {
  Array out = log_softmax(logits.value(), temperature);
  const auto ia = logits.id();
  return logits.graph().add_node(OpKind::kLogSoftmax, {logits}, std::move(out),
                                 [ia, temperature](Graph& g, std::uint32_t self) {
                                   const auto& G = g.upstream(self);
                                   const auto& Y = g.value(self);
                                   auto* d = g.accum(ia);
                                   if (!d) return;
                                   for (std::size_t r = 0; r < Y.rows(); ++r) {
                                     auto y = Y.row(r);
                                     auto gr = G.row(r);
                                     double total = 0.0;
                                     for (double v : gr) total += v;
                                     auto dr = d->row(r);
                                     for (std::size_t j = 0; j < y.size(); ++j) {
                                       dr[j] += (gr[j] - std::exp(y[j]) * total) / temperature;
                                     }
                                   }
                                 });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const auto& X = x.value();
  const auto n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.value().shape()) + " vs rows of " +
                         shape_string(X.shape()));
  }
  const auto rows = X.rows();
  auto xhat = std::make_shared<Array>(X.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Array out(X.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = X.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * rs;
      xhat->at(r, j) = h;
      out.at(r, j) = h * gv[j] + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().add_node(
      OpKind::kLayerNorm, {x, gain, bias}, std::move(out), [ix, ig, ib, n, xhat, rstd](Graph& g, std::uint32_t self) {
        const auto& G = g.upstream(self);
        const auto& gv = g.value(ig);
        if (auto* dg = g.accum(ig)) {
          for (std::size_t r = 0; r < G.rows(); ++r) {
            for (std::size_t j = 0; j < n; ++j) (*dg)[j] += G.at(r, j) * xhat->at(r, j);
          }
        }
        if (auto* db = g.accum(ib)) {
          for (std::size_t r = 0; r < G.rows(); ++r) {
            for (std::size_t j = 0; j < n; ++j) (*db)[j] += G.at(r, j);
          }
        }
        if (auto* dx = g.accum(ix)) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < G.rows(); ++r) {
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = G.at(r, j) * gv[j];
              mean_d += dh;
              mean_dh += dh * xhat->at(r, j);
            }
            mean_d *= inv_n;
            mean_dh *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = G.at(r, j) * gv[j];
              dx->at(r, j) += (*rstd)[r] * (dh - mean_d - xhat->at(r, j) * mean_dh);
            }
          }
        }
      });
}

// ---- indexing ------------------------------------------------------------------

Var embedding(Var table, std::span<const int> ids) {
  const auto& T = table.value();
  require_matrix(T, "embedding");
  const auto vocab = T.shape()[0], d = T.shape()[1];
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  Array out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab) +
                           " rows");
    }
    std::copy_n(T.row(static_cast<std::size_t>(ids[i])).data(), d, out.row(i).data());
  }
  const auto it = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  return table.graph().add_node(OpKind::kEmbedding, {table}, std::move(out),
                                [it, idv = std::move(idv), d](Graph& g, std::uint32_t self) {
                                  const auto& G = g.upstream(self);
                                  auto* dt = g.accum(it);
                                  if (!dt) return;
                                  for (std::size_t i = 0; i < idv.size(); ++i) {
                                    auto dst = dt->row(static_cast<std::size_t>(idv[i]));
                                    auto src = G.row(i);
                                    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                                  }
                                });
}

Var causal_self_attention(Var qkv, std::size_t n_heads) {
  const auto& X = qkv.value();
  require_matrix(X, "causal_self_attention");
  const auto T = X.shape()[0];
  if (n_heads == 0 || X.shape()[1] % (3 * n_heads) != 0) {
    throw DimensionError("causal_self_attention: width " + std::to_string(X.shape()[1]) +
                         " is not 3 * d_model with d_model divisible by " + std::to_string(n_heads) + " heads");
  }
  const auto d = X.shape()[1] / 3;
  const auto hd = d / n_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto w = 3 * d;
  // probs[h][i][j] for j <= i
  auto probs = std::make_shared<std::vector<double>>(n_heads * T * T, 0.0);
  Array out({T, d});
  std::vector<double> s(T);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
    for (std::size_t i = 0; i < T; ++i) {
      const double* q = X.data() + i * w + qo;
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* k = X.data() + j * w + ko;
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[c] * k[c];
        s[j] = dot * sc;
        mx = std::max(mx, s[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        s[j] = std::exp(s[j] - mx);
        total += s[j];
      }
      double* p = probs->data() + (h * T + i) * T;
      double* o = out.data() + i * d + h * hd;
      for (std::size_t j = 0; j <= i; ++j) {
        p[j] = s[j] / total;
        const double* v = X.data() + j * w + vo;
        for (std::size_t c = 0; c < hd; ++c) o[c] += p[j] * v[c];
      }
    }
  }
  const auto ix = qkv.id();
  return qkv.graph().add_node(
      OpKind::kCausalAttention, {qkv}, std::move(out),
      [ix, probs, T, d, hd, n_heads, sc, w](Graph& g, std::uint32_t self) {
        auto* dX = g.accum(ix);
        if (!dX) return;
        const auto& G = g.upstream(self);
        const auto& X = g.value(ix);
        std::vector<double> dp(T);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const auto qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
          for (std::size_t i = 0; i < T; ++i) {
            const double* go = G.data() + i * d + h * hd;
            const double* p = probs->data() + (h * T + i) * T;
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
              const double* v = X.data() + j * w + vo;
              double acc = 0.0;
              for (std::size_t c = 0; c < hd; ++c) acc += go[c] * v[c];
              dp[j] = acc;
              dot += p[j] * acc;
              double* dv = dX->data() + j * w + vo;
              for (std::size_t c = 0; c < hd; ++c) dv[c] += p[j] * go[c];
            }
            const double* q = X.data() + i * w + qo;
            double* dq = dX->data() + i * w + qo;
            for (std::size_t j = 0; j <= i; ++j) {
              const double ds = p[j] * (dp[j] - dot) * sc;
              if (ds == 0.0) continue;
              const double* k = X.data() + j * w + ko;
              double* dk = dX->data() + j * w + ko;
              for (std::size_t c = 0; c < hd; ++c) {
                dq[c] += ds * k[c];
                dk[c] += ds * q[c];
              }
            }
          }
        }
      });
}

Var pick(Var a, std::span<const int> cols) {
  const auto& A = a.value();
  if (cols.size() != A.rows()) {
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + std::to_string(A.rows()) + " rows");
  }
  Array out({A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    if (cols[r] < 0 || static_cast<std::size_t>(cols[r]) >= A.cols()) {
      throw DimensionError("pick: column " + std::to_string(cols[r]) + " outside width " + std::to_string(A.cols()));
    }
    out[r] = A.at(r, static_cast<std::size_t>(cols[r]));
  }
  const auto ia = a.id();
  std::vector<int> cv(cols.begin(), cols.end());
  return a.graph().add_node(OpKind::kPick, {a}, std::move(out), [ia, cv = std::move(cv)](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      for (std::size_t r = 0; r < cv.size(); ++r) d->at(r, static_cast<std::size_t>(cv[r])) += G[r];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const auto& A = a.value();
  require_matrix(A, "slice_rows");
  if (count == 0 || begin + count > A.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(A.shape()));
  }
  const auto n = A.cols();
  Array out({count, n});
  std::copy_n(A.data() + begin * n, count * n, out.data());
  const auto ia = a.id();
  return a.graph().add_node(OpKind::kSliceRows, {a}, std::move(out), [ia, begin, n](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    if (auto* d = g.accum(ia)) {
      double* dst = d->data() + begin * n;
      for (std::size_t i = 0; i < G.size(); ++i) dst[i] += G[i];
    }
  });
}

Var stop_gradient(Var a) { return a.graph().detach(a); }

Var kl_rows(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_same_shape(A, B, "kl_rows");
  const auto rows = A.rows(), n = A.cols();
  auto lp = std::make_shared<Array>(log_softmax(A));
  auto lq = std::make_shared<Array>(log_softmax(B));
  Array out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double t = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = std::exp(lp->at(r, j));
      if (p > 0.0) t += p * (lp->at(r, j) - lq->at(r, j));
    }
    out[r] = t;
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph().add_node(OpKind::kRowKl, {a, b}, std::move(out), [ia, ib, lp, lq, n](Graph& g, std::uint32_t self) {
    const auto& G = g.upstream(self);
    const auto& K = g.value(self);
    auto* da = g.accum(ia);
    auto* db = g.accum(ib);
    for (std::size_t r = 0; r < G.size(); ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        const double p = std::exp(lp->at(r, j));
        // d/da_j = p_j (lp_j - lq_j - KL);  d/db_j = q_j - p_j
        if (da) da->at(r, j) += G[r] * p * ((lp->at(r, j) - lq->at(r, j)) - K[r]);
        if (db) db->at(r, j) += G[r] * (std::exp(lq->at(r, j)) - p);
      }
    }
  });
}

}  // namespace copsd
