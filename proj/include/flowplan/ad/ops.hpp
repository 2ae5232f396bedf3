// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_AD_OPS_HPP
#define FLOWPLAN_AD_OPS_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "flowplan/ad/tape.hpp"

// Reverse-mode primitives. Each op validates shapes (reporting both on
// mismatch), computes the forward value, and registers a closure that scatters
// the incoming adjoint into its parents. No implicit broadcasting exists
// beyond the explicit bias_add / add_row_broadcast forms.

namespace flowplan::ad {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapM = Eigen::Map<const MatRM<S>>;

namespace detail {

inline void check_same_shape(const std::vector<int>& a, const std::vector<int>& b,
                             const char* op) {
  if (!same_shape(a, b)) {
    throw NumericError(std::string(op) + ": shape mismatch " +
                       Tensor<float>::shape_str(a) + " vs " + Tensor<float>::shape_str(b));
  }
}

inline std::vector<int> drop_axis(const std::vector<int>& s, int axis) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace detail

// ---- elementwise binary ----

template <typename S, typename FwdFn, typename BwdFn>
Var elementwise_binary(Tape<S>& tape, Var a, Var b, const char* name, FwdFn fwd, BwdFn bwd) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::check_same_shape(va.shape, vb.shape, name);
  Tensor<S> out(va.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(va.data[i], vb.data[i]);
  return tape.push(std::move(out), true,
                   [a, b, bwd](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     const auto& xa = t.value_at(a.id).data;
                     const auto& xb = t.value_at(b.id).data;
                     auto& ga = t.grad_buf(a.id);
                     auto& gb = t.grad_buf(b.id);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       S da, db;
                       bwd(xa[i], xb[i], g[i], da, db);
                       ga[i] += da;
                       gb[i] += db;
                     }
                   },
                   name);
}

template <typename S>
Var add(Tape<S>& t, Var a, Var b) {
  return elementwise_binary(t, a, b, "add", [](S x, S y) { return x + y; },
                            [](S, S, S g, S& da, S& db) { da = g; db = g; });
}

template <typename S>
Var sub(Tape<S>& t, Var a, Var b) {
  return elementwise_binary(t, a, b, "sub", [](S x, S y) { return x - y; },
                            [](S, S, S g, S& da, S& db) { da = g; db = -g; });
}

template <typename S>
Var mul(Tape<S>& t, Var a, Var b) {
  return elementwise_binary(t, a, b, "mul", [](S x, S y) { return x * y; },
                            [](S x, S y, S g, S& da, S& db) { da = g * y; db = g * x; });
}

template <typename S>
Var div(Tape<S>& t, Var a, Var b) {
  return elementwise_binary(t, a, b, "div", [](S x, S y) { return x / y; },
                            [](S x, S y, S g, S& da, S& db) {
                              da = g / y;
                              db = -g * x / (y * y);
                            });
}

// ---- elementwise unary ----

template <typename S, typename FwdFn, typename BwdFn>
Var elementwise_unary(Tape<S>& tape, Var a, const char* name, FwdFn fwd, BwdFn bwd) {
  const auto& va = tape.value(a);
  Tensor<S> out(va.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(va.data[i]);
  return tape.push(std::move(out), true,
                   [a, bwd](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     const auto& x = t.value_at(a.id).data;
                     const auto& y = t.value_at(self).data;
                     auto& ga = t.grad_buf(a.id);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += bwd(x[i], y[i], g[i]);
                   },
                   name);
}

template <typename S>
Var scale(Tape<S>& t, Var a, S c) {
  return elementwise_unary(t, a, "scale", [c](S x) { return c * x; },
                           [c](S, S, S g) { return c * g; });
}

template <typename S>
Var square(Tape<S>& t, Var a) {
  return elementwise_unary(t, a, "square", [](S x) { return x * x; },
                           [](S x, S, S g) { return S(2) * x * g; });
}

template <typename S>
Var exp(Tape<S>& t, Var a) {
  return elementwise_unary(t, a, "exp", [](S x) { return std::exp(x); },
                           [](S, S y, S g) { return y * g; });
}

template <typename S>
Var log(Tape<S>& t, Var a) {
  return elementwise_unary(t, a, "log", [](S x) { return std::log(x); },
                           [](S x, S, S g) { return g / x; });
}

template <typename S>
Var silu(Tape<S>& t, Var a) {
  return elementwise_unary(
      t, a, "silu",
      [](S x) { return x / (S(1) + std::exp(-x)); },
      [](S x, S, S g) {
        const S s = S(1) / (S(1) + std::exp(-x));
        return g * (s + x * s * (S(1) - s));
      });
}

template <typename S>
Var softplus(Tape<S>& t, Var a) {
  // Stable branch: for large x, log1p(exp(-x)) + x avoids overflow.
  return elementwise_unary(
      t, a, "softplus",
      [](S x) {
        if (x > S(20)) return x + std::log1p(std::exp(-x));
        return std::log1p(std::exp(x));
      },
      [](S x, S, S g) { return g / (S(1) + std::exp(-x)); });
}

// ---- broadcasting forms ----

/// x (..., C) + b (C), broadcast over all leading dimensions.
template <typename S>
Var bias_add(Tape<S>& tape, Var x, Var b) {
  const auto& vx = tape.value(x);
  const auto& vb = tape.value(b);
  if (vb.ndim() != 1 || vx.ndim() < 1 || vx.shape.back() != vb.dim(0)) {
    throw NumericError("bias_add: shape mismatch " + Tensor<S>::shape_str(vx.shape) + " vs " +
                       Tensor<S>::shape_str(vb.shape));
  }
  const int C = vb.dim(0);
  Tensor<S> out(vx.shape);
  const std::size_t rows = vx.numel() / static_cast<std::size_t>(C);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < C; ++c) {
      out.data[r * C + c] = vx.data[r * C + c] + vb.data[static_cast<std::size_t>(c)];
    }
  }
  return tape.push(std::move(out), true,
                   [x, b, C, rows](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& gx = t.grad_buf(x.id);
                     auto& gb = t.grad_buf(b.id);
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (int c = 0; c < C; ++c) {
                         gx[r * C + c] += g[r * C + c];
                         gb[static_cast<std::size_t>(c)] += g[r * C + c];
                       }
                     }
                   },
                   "bias_add");
}

/// x (B,T,C) + v (B,C), broadcast over the time axis. Used for feature-wise
/// additive conditioning.
template <typename S>
Var add_row_broadcast(Tape<S>& tape, Var x, Var v) {
  const auto& vx = tape.value(x);
  const auto& vv = tape.value(v);
  if (vx.ndim() != 3 || vv.ndim() != 2 || vx.dim(0) != vv.dim(0) || vx.dim(2) != vv.dim(1)) {
    throw NumericError("add_row_broadcast: shape mismatch " + Tensor<S>::shape_str(vx.shape) +
                       " vs " + Tensor<S>::shape_str(vv.shape));
  }
  const int B = vx.dim(0), T = vx.dim(1), C = vx.dim(2);
  Tensor<S> out(vx.shape);
  for (int b = 0; b < B; ++b) {
    for (int ti = 0; ti < T; ++ti) {
      const std::size_t o = (static_cast<std::size_t>(b) * T + ti) * C;
      const std::size_t p = static_cast<std::size_t>(b) * C;
      for (int c = 0; c < C; ++c) out.data[o + c] = vx.data[o + c] + vv.data[p + c];
    }
  }
  return tape.push(std::move(out), true,
                   [x, v, B, T, C](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& gx = t.grad_buf(x.id);
                     auto& gv = t.grad_buf(v.id);
                     for (int b = 0; b < B; ++b) {
                       for (int ti = 0; ti < T; ++ti) {
                         const std::size_t o = (static_cast<std::size_t>(b) * T + ti) * C;
                         const std::size_t p = static_cast<std::size_t>(b) * C;
                         for (int c = 0; c < C; ++c) {
                           gx[o + c] += g[o + c];
                           gv[p + c] += g[o + c];
                         }
                       }
                     }
                   },
                   "add_row_broadcast");
}

// ---- matrix products ----

template <typename S>
Var matmul(Tape<S>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0)) {
    throw NumericError("matmul: shape mismatch " + Tensor<S>::shape_str(va.shape) + " vs " +
                       Tensor<S>::shape_str(vb.shape));
  }
  const int M = va.dim(0), K = va.dim(1), N = vb.dim(1);
  Tensor<S> out({M, N});
  CMapM<S> A(va.data.data(), M, K);
  CMapM<S> B(vb.data.data(), K, N);
  MapM<S> C(out.data.data(), M, N);
  C.noalias() = A * B;
  return tape.push(std::move(out), true,
                   [a, b, M, K, N](Tape<S>& t, int self) {
                     CMapM<S> G(t.grad_buf(self).data(), M, N);
                     CMapM<S> A(t.value_at(a.id).data.data(), M, K);
                     CMapM<S> B(t.value_at(b.id).data.data(), K, N);
                     MapM<S> GA(t.grad_buf(a.id).data(), M, K);
                     MapM<S> GB(t.grad_buf(b.id).data(), K, N);
                     GA.noalias() += G * B.transpose();
                     GB.noalias() += A.transpose() * G;
                   },
                   "matmul");
}

/// Batched matmul over a shared leading group dimension: (G,M,K) x (G,K,N).
template <typename S>
Var bmm(Tape<S>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(1)) {
    throw NumericError("bmm: shape mismatch " + Tensor<S>::shape_str(va.shape) + " vs " +
                       Tensor<S>::shape_str(vb.shape));
  }
  const int G = va.dim(0), M = va.dim(1), K = va.dim(2), N = vb.dim(2);
  Tensor<S> out({G, M, N});
  for (int g = 0; g < G; ++g) {
    CMapM<S> A(va.data.data() + static_cast<std::size_t>(g) * M * K, M, K);
    CMapM<S> B(vb.data.data() + static_cast<std::size_t>(g) * K * N, K, N);
    MapM<S> C(out.data.data() + static_cast<std::size_t>(g) * M * N, M, N);
    C.noalias() = A * B;
  }
  return tape.push(std::move(out), true,
                   [a, b, G, M, K, N](Tape<S>& t, int self) {
                     for (int g = 0; g < G; ++g) {
                       CMapM<S> Gm(t.grad_buf(self).data() + static_cast<std::size_t>(g) * M * N, M, N);
                       CMapM<S> A(t.value_at(a.id).data.data() + static_cast<std::size_t>(g) * M * K, M, K);
                       CMapM<S> B(t.value_at(b.id).data.data() + static_cast<std::size_t>(g) * K * N, K, N);
                       MapM<S> GA(t.grad_buf(a.id).data() + static_cast<std::size_t>(g) * M * K, M, K);
                       MapM<S> GB(t.grad_buf(b.id).data() + static_cast<std::size_t>(g) * K * N, K, N);
                       GA.noalias() += Gm * B.transpose();
                       GB.noalias() += A.transpose() * Gm;
                     }
                   },
                   "bmm");
}

// ---- structure ----

template <typename S>
Var reshape(Tape<S>& tape, Var a, std::vector<int> new_shape) {
  const auto& va = tape.value(a);
  if (Tensor<S>::numel_of(new_shape) != va.numel()) {
    throw NumericError("reshape: element count mismatch " + Tensor<S>::shape_str(va.shape) +
                       " vs " + Tensor<S>::shape_str(new_shape));
  }
  Tensor<S> out(std::move(new_shape), va.data);
  return tape.push(std::move(out), true,
                   [a](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& ga = t.grad_buf(a.id);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   },
                   "reshape");
}

template <typename S>
Var concat(Tape<S>& tape, const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw NumericError("concat: no inputs");
  const auto& first = tape.value(parts[0]);
  const int nd = first.ndim();
  if (axis < 0 || axis >= nd) throw NumericError("concat: axis out of range");
  std::vector<int> out_shape = first.shape;
  int total = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    if (v.ndim() != nd) throw NumericError("concat: rank mismatch");
    for (int d = 0; d < nd; ++d) {
      if (d != axis && v.dim(d) != first.dim(d)) {
        throw NumericError("concat: shape mismatch " + Tensor<S>::shape_str(v.shape) + " vs " +
                           Tensor<S>::shape_str(first.shape));
      }
    }
    total += v.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(first.dim(d));
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<std::size_t>(first.dim(d));

  Tensor<S> out(out_shape);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    const std::size_t span = static_cast<std::size_t>(v.dim(axis)) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data.data() + o * span, span,
                  out.data.data() + o * static_cast<std::size_t>(total) * inner + offset);
    }
    offset += span;
  }
  auto parts_copy = parts;
  return tape.push(std::move(out), true,
                   [parts_copy, outer, inner, total](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     std::size_t offset = 0;
                     for (Var p : parts_copy) {
                       auto& gp = t.grad_buf(p.id);
                       const std::size_t span = gp.size() / (outer == 0 ? 1 : outer);
                       for (std::size_t o = 0; o < outer; ++o) {
                         const S* src = g.data() + o * static_cast<std::size_t>(total) * inner + offset;
                         S* dst = gp.data() + o * span;
                         for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
                       }
                       offset += span;
                     }
                   },
                   "concat");
}

template <typename S>
Var slice(Tape<S>& tape, Var a, int axis, int start, int len) {
  const auto& va = tape.value(a);
  const int nd = va.ndim();
  if (axis < 0 || axis >= nd || start < 0 || len < 0 || start + len > va.dim(axis)) {
    throw NumericError("slice: range [" + std::to_string(start) + "," +
                       std::to_string(start + len) + ") out of bounds for " +
                       Tensor<S>::shape_str(va.shape));
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(va.dim(d));
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<std::size_t>(va.dim(d));
  std::vector<int> out_shape = va.shape;
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor<S> out(out_shape);
  const std::size_t src_span = static_cast<std::size_t>(va.dim(axis)) * inner;
  const std::size_t dst_span = static_cast<std::size_t>(len) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(va.data.data() + o * src_span + static_cast<std::size_t>(start) * inner, dst_span,
                out.data.data() + o * dst_span);
  }
  return tape.push(std::move(out), true,
                   [a, outer, inner, start, src_span, dst_span](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& ga = t.grad_buf(a.id);
                     for (std::size_t o = 0; o < outer; ++o) {
                       const S* src = g.data() + o * dst_span;
                       S* dst = ga.data() + o * src_span + static_cast<std::size_t>(start) * inner;
                       for (std::size_t i = 0; i < dst_span; ++i) dst[i] += src[i];
                     }
                   },
                   "slice");
}

template <typename S>
Var permute(Tape<S>& tape, Var a, std::vector<int> perm) {
  const auto& va = tape.value(a);
  const int nd = va.ndim();
  if (static_cast<int>(perm.size()) != nd) throw NumericError("permute: rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(nd), false);
  for (int p : perm) {
    if (p < 0 || p >= nd || seen[static_cast<std::size_t>(p)]) {
      throw NumericError("permute: invalid permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  std::vector<int> out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = va.dim(perm[i]);
  }
  std::vector<std::size_t> in_strides(static_cast<std::size_t>(nd), 1);
  for (int d = nd - 2; d >= 0; --d) {
    in_strides[static_cast<std::size_t>(d)] =
        in_strides[static_cast<std::size_t>(d + 1)] * static_cast<std::size_t>(va.dim(d + 1));
  }
  // Stride of each output axis in the input buffer.
  std::vector<std::size_t> gather(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) gather[i] = in_strides[static_cast<std::size_t>(perm[i])];

  Tensor<S> out(out_shape);
  const std::size_t n = out.numel();
  std::vector<int> idx(perm.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < perm.size(); ++d) src += static_cast<std::size_t>(idx[d]) * gather[d];
    out.data[flat] = va.data[src];
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return tape.push(std::move(out), true,
                   [a, gather, out_shape, nd](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& ga = t.grad_buf(a.id);
                     std::vector<int> idx(out_shape.size(), 0);
                     for (std::size_t flat = 0; flat < g.size(); ++flat) {
                       std::size_t src = 0;
                       for (std::size_t d = 0; d < gather.size(); ++d) {
                         src += static_cast<std::size_t>(idx[d]) * gather[d];
                       }
                       ga[src] += g[flat];
                       for (int d = nd - 1; d >= 0; --d) {
                         if (++idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
                         idx[static_cast<std::size_t>(d)] = 0;
                       }
                     }
                   },
                   "permute");
}

// ---- reductions ----

template <typename S>
Var sum(Tape<S>& tape, Var a) {
  const auto& va = tape.value(a);
  S acc(0);
  for (S x : va.data) acc += x;
  Tensor<S> out({1});
  out.data[0] = acc;
  return tape.push(std::move(out), true,
                   [a](Tape<S>& t, int self) {
                     const S g = t.grad_buf(self)[0];
                     auto& ga = t.grad_buf(a.id);
                     for (auto& v : ga) v += g;
                   },
                   "sum");
}

template <typename S>
Var mean(Tape<S>& tape, Var a) {
  const auto& va = tape.value(a);
  if (va.numel() == 0) throw NumericError("mean: empty tensor");
  const S inv = S(1) / static_cast<S>(va.numel());
  S acc(0);
  for (S x : va.data) acc += x;
  Tensor<S> out({1});
  out.data[0] = acc * inv;
  return tape.push(std::move(out), true,
                   [a, inv](Tape<S>& t, int self) {
                     const S g = t.grad_buf(self)[0] * inv;
                     auto& ga = t.grad_buf(a.id);
                     for (auto& v : ga) v += g;
                   },
                   "mean");
}

/// Mean over the middle axis of a rank-3 tensor: (B,T,C) -> (B,C).
template <typename S>
Var mean_axis1(Tape<S>& tape, Var a) {
  const auto& va = tape.value(a);
  if (va.ndim() != 3) throw NumericError("mean_axis1: expected rank 3, got " +
                                         Tensor<S>::shape_str(va.shape));
  const int B = va.dim(0), T = va.dim(1), C = va.dim(2);
  if (T == 0) throw NumericError("mean_axis1: empty axis");
  const S inv = S(1) / static_cast<S>(T);
  Tensor<S> out({B, C});
  for (int b = 0; b < B; ++b) {
    for (int ti = 0; ti < T; ++ti) {
      const std::size_t o = (static_cast<std::size_t>(b) * T + ti) * C;
      for (int c = 0; c < C; ++c) out.data[static_cast<std::size_t>(b) * C + c] += va.data[o + c];
    }
    for (int c = 0; c < C; ++c) out.data[static_cast<std::size_t>(b) * C + c] *= inv;
  }
  return tape.push(std::move(out), true,
                   [a, B, T, C, inv](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& ga = t.grad_buf(a.id);
                     for (int b = 0; b < B; ++b) {
                       for (int ti = 0; ti < T; ++ti) {
                         const std::size_t o = (static_cast<std::size_t>(b) * T + ti) * C;
                         for (int c = 0; c < C; ++c) {
                           ga[o + c] += g[static_cast<std::size_t>(b) * C + c] * inv;
                         }
                       }
                     }
                   },
                   "mean_axis1");
}

// ---- normalization / attention ----

/// Layer normalization over the last axis with learnable scale and shift.
template <typename S>
Var layer_norm(Tape<S>& tape, Var x, Var gamma, Var beta, S eps = S(1e-5)) {
  const auto& vx = tape.value(x);
  const auto& vg = tape.value(gamma);
  const auto& vb = tape.value(beta);
  const int C = vx.shape.back();
  if (vg.ndim() != 1 || vb.ndim() != 1 || vg.dim(0) != C || vb.dim(0) != C) {
    throw NumericError("layer_norm: parameter shape mismatch " + Tensor<S>::shape_str(vx.shape) +
                       " vs " + Tensor<S>::shape_str(vg.shape));
  }
  const std::size_t rows = vx.numel() / static_cast<std::size_t>(C);
  Tensor<S> out(vx.shape);
  auto xhat = std::make_shared<std::vector<S>>(vx.numel());
  auto inv_std = std::make_shared<std::vector<S>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const S* row = vx.data.data() + r * C;
    S mu(0);
    for (int c = 0; c < C; ++c) mu += row[c];
    mu /= static_cast<S>(C);
    S var(0);
    for (int c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<S>(C);
    const S istd = S(1) / std::sqrt(var + eps);
    (*inv_std)[r] = istd;
    for (int c = 0; c < C; ++c) {
      const S xh = (row[c] - mu) * istd;
      (*xhat)[r * C + c] = xh;
      out.data[r * C + c] = vg.data[static_cast<std::size_t>(c)] * xh +
                            vb.data[static_cast<std::size_t>(c)];
    }
  }
  return tape.push(std::move(out), true,
                   [x, gamma, beta, C, rows, xhat, inv_std](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     const auto& vg = t.value_at(gamma.id).data;
                     auto& gx = t.grad_buf(x.id);
                     auto& gg = t.grad_buf(gamma.id);
                     auto& gb = t.grad_buf(beta.id);
                     const S invC = S(1) / static_cast<S>(C);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const S istd = (*inv_std)[r];
                       S sum_dxhat(0), sum_dxhat_xhat(0);
                       for (int c = 0; c < C; ++c) {
                         const std::size_t i = r * C + c;
                         const S dy = g[i];
                         const S xh = (*xhat)[i];
                         gg[static_cast<std::size_t>(c)] += dy * xh;
                         gb[static_cast<std::size_t>(c)] += dy;
                         const S dxhat = dy * vg[static_cast<std::size_t>(c)];
                         sum_dxhat += dxhat;
                         sum_dxhat_xhat += dxhat * xh;
                       }
                       for (int c = 0; c < C; ++c) {
                         const std::size_t i = r * C + c;
                         const S dxhat = g[i] * vg[static_cast<std::size_t>(c)];
                         gx[i] += istd * (dxhat - invC * sum_dxhat -
                                          (*xhat)[i] * invC * sum_dxhat_xhat);
                       }
                     }
                   },
                   "layer_norm");
}

/// Numerically stable softmax over the last axis.
template <typename S>
Var softmax_lastdim(Tape<S>& tape, Var x) {
  const auto& vx = tape.value(x);
  const int C = vx.shape.back();
  const std::size_t rows = vx.numel() / static_cast<std::size_t>(C);
  Tensor<S> out(vx.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const S* row = vx.data.data() + r * C;
    S mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    S denom(0);
    for (int c = 0; c < C; ++c) {
      const S e = std::exp(row[c] - mx);
      out.data[r * C + c] = e;
      denom += e;
    }
    const S inv = S(1) / denom;
    for (int c = 0; c < C; ++c) out.data[r * C + c] *= inv;
  }
  return tape.push(std::move(out), true,
                   [x, C, rows](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     const auto& y = t.value_at(self).data;
                     auto& gx = t.grad_buf(x.id);
                     for (std::size_t r = 0; r < rows; ++r) {
                       S dot(0);
                       for (int c = 0; c < C; ++c) dot += g[r * C + c] * y[r * C + c];
                       for (int c = 0; c < C; ++c) {
                         gx[r * C + c] += y[r * C + c] * (g[r * C + c] - dot);
                       }
                     }
                   },
                   "softmax_lastdim");
}

// ---- sequence ops ----

/// 1-d convolution over the middle axis of (B,T,Cin), kernel (K,Cin,Cout),
/// stride 1 with zero same-padding, so the output is (B,T,Cout).
template <typename S>
Var conv1d(Tape<S>& tape, Var x, Var w, Var b) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  const auto& vb = tape.value(b);
  if (vx.ndim() != 3 || vw.ndim() != 3 || vb.ndim() != 1 || vx.dim(2) != vw.dim(1) ||
      vb.dim(0) != vw.dim(2)) {
    throw NumericError("conv1d: shape mismatch " + Tensor<S>::shape_str(vx.shape) + " vs " +
                       Tensor<S>::shape_str(vw.shape));
  }
  const int B = vx.dim(0), T = vx.dim(1), Cin = vx.dim(2);
  const int K = vw.dim(0), Cout = vw.dim(2);
  const int pad = (K - 1) / 2;
  if (K % 2 == 0) throw NumericError("conv1d: kernel size must be odd for same padding");

  // im2col: rows are (b,t), columns are (k, cin).
  auto col = std::make_shared<Tensor<S>>(std::vector<int>{B * T, K * Cin});
  for (int bb = 0; bb < B; ++bb) {
    for (int ti = 0; ti < T; ++ti) {
      S* dst = col->data.data() + (static_cast<std::size_t>(bb) * T + ti) * K * Cin;
      for (int k = 0; k < K; ++k) {
        const int src_t = ti + k - pad;
        if (src_t < 0 || src_t >= T) continue;  // zero padding
        const S* src = vx.data.data() + (static_cast<std::size_t>(bb) * T + src_t) * Cin;
        std::copy_n(src, Cin, dst + static_cast<std::size_t>(k) * Cin);
      }
    }
  }
  Tensor<S> out({B, T, Cout});
  {
    CMapM<S> Cm(col->data.data(), B * T, K * Cin);
    CMapM<S> Wm(vw.data.data(), K * Cin, Cout);
    MapM<S> Om(out.data.data(), B * T, Cout);
    Om.noalias() = Cm * Wm;
    for (int r = 0; r < B * T; ++r) {
      for (int c = 0; c < Cout; ++c) {
        out.data[static_cast<std::size_t>(r) * Cout + c] += vb.data[static_cast<std::size_t>(c)];
      }
    }
  }
  return tape.push(std::move(out), true,
                   [x, w, b, B, T, Cin, K, Cout, pad, col](Tape<S>& t, int self) {
                     CMapM<S> G(t.grad_buf(self).data(), B * T, Cout);
                     // weights and bias
                     {
                       CMapM<S> Cm(col->data.data(), B * T, K * Cin);
                       MapM<S> GW(t.grad_buf(w.id).data(), K * Cin, Cout);
                       GW.noalias() += Cm.transpose() * G;
                       auto& gb = t.grad_buf(b.id);
                       for (int r = 0; r < B * T; ++r) {
                         for (int c = 0; c < Cout; ++c) {
                           gb[static_cast<std::size_t>(c)] +=
                               t.grad_buf(self)[static_cast<std::size_t>(r) * Cout + c];
                         }
                       }
                     }
                     // input via dcol = G * W^T, scattered back (col2im)
                     {
                       CMapM<S> Wm(t.value_at(w.id).data.data(), K * Cin, Cout);
                       MatRM<S> dcol = G * Wm.transpose();
                       auto& gx = t.grad_buf(x.id);
                       for (int bb = 0; bb < B; ++bb) {
                         for (int ti = 0; ti < T; ++ti) {
                           const S* src = dcol.data() + (static_cast<std::size_t>(bb) * T + ti) * K * Cin;
                           for (int k = 0; k < K; ++k) {
                             const int src_t = ti + k - pad;
                             if (src_t < 0 || src_t >= T) continue;
                             S* dst = gx.data() + (static_cast<std::size_t>(bb) * T + src_t) * Cin;
                             const S* s = src + static_cast<std::size_t>(k) * Cin;
                             for (int c = 0; c < Cin; ++c) dst[c] += s[c];
                           }
                         }
                       }
                     }
                   },
                   "conv1d");
}

/// Window-2 average pooling over the middle axis; odd tails average the single
/// remaining element, so the output length is ceil(T/2).
template <typename S>
Var avg_pool1d(Tape<S>& tape, Var x) {
  const auto& vx = tape.value(x);
  if (vx.ndim() != 3) throw NumericError("avg_pool1d: expected rank 3");
  const int B = vx.dim(0), T = vx.dim(1), C = vx.dim(2);
  const int To = (T + 1) / 2;
  Tensor<S> out({B, To, C});
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < To; ++o) {
      const int t0 = 2 * o;
      const int cnt = (t0 + 1 < T) ? 2 : 1;
      const S inv = S(1) / static_cast<S>(cnt);
      for (int c = 0; c < C; ++c) {
        S acc = vx.data[(static_cast<std::size_t>(b) * T + t0) * C + c];
        if (cnt == 2) acc += vx.data[(static_cast<std::size_t>(b) * T + t0 + 1) * C + c];
        out.data[(static_cast<std::size_t>(b) * To + o) * C + c] = acc * inv;
      }
    }
  }
  return tape.push(std::move(out), true,
                   [x, B, T, C, To](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& gx = t.grad_buf(x.id);
                     for (int b = 0; b < B; ++b) {
                       for (int o = 0; o < To; ++o) {
                         const int t0 = 2 * o;
                         const int cnt = (t0 + 1 < T) ? 2 : 1;
                         const S inv = S(1) / static_cast<S>(cnt);
                         for (int c = 0; c < C; ++c) {
                           const S gv = g[(static_cast<std::size_t>(b) * To + o) * C + c] * inv;
                           gx[(static_cast<std::size_t>(b) * T + t0) * C + c] += gv;
                           if (cnt == 2) gx[(static_cast<std::size_t>(b) * T + t0 + 1) * C + c] += gv;
                         }
                       }
                     }
                   },
                   "avg_pool1d");
}

/// Nearest-neighbor upsampling by 2 over the middle axis: (B,T,C) -> (B,2T,C).
template <typename S>
Var upsample_nearest1d(Tape<S>& tape, Var x) {
  const auto& vx = tape.value(x);
  if (vx.ndim() != 3) throw NumericError("upsample_nearest1d: expected rank 3");
  const int B = vx.dim(0), T = vx.dim(1), C = vx.dim(2);
  Tensor<S> out({B, 2 * T, C});
  for (int b = 0; b < B; ++b) {
    for (int ti = 0; ti < T; ++ti) {
      const S* src = vx.data.data() + (static_cast<std::size_t>(b) * T + ti) * C;
      std::copy_n(src, C, out.data.data() + (static_cast<std::size_t>(b) * 2 * T + 2 * ti) * C);
      std::copy_n(src, C, out.data.data() + (static_cast<std::size_t>(b) * 2 * T + 2 * ti + 1) * C);
    }
  }
  return tape.push(std::move(out), true,
                   [x, B, T, C](Tape<S>& t, int self) {
                     const auto& g = t.grad_buf(self);
                     auto& gx = t.grad_buf(x.id);
                     for (int b = 0; b < B; ++b) {
                       for (int ti = 0; ti < T; ++ti) {
                         S* dst = gx.data() + (static_cast<std::size_t>(b) * T + ti) * C;
                         const S* s0 = g.data() + (static_cast<std::size_t>(b) * 2 * T + 2 * ti) * C;
                         const S* s1 = g.data() + (static_cast<std::size_t>(b) * 2 * T + 2 * ti + 1) * C;
                         for (int c = 0; c < C; ++c) dst[c] += s0[c] + s1[c];
                       }
                     }
                   },
                   "upsample_nearest1d");
}

}  // namespace flowplan::ad

#endif  // FLOWPLAN_AD_OPS_HPP
