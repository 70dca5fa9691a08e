/*
 * Copyright 2026 The nmn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/parameter_store.hpp"
#include "nmn/tape.hpp"
#include "nmn/tensor.hpp"

// Differentiable operations over Var handles. Every op computes its value
// eagerly, records it on the tape, and registers a backward rule that
// accumulates (+=) into the gradients of its inputs.
namespace nmn {

enum class Padding { kSame, kValid };

namespace detail {

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got dims " +
                     to_string(v.dims()));
  }
}

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape != b.tape) throw ContractError("operands on different tapes");
}

inline std::uint64_t hash_bits(const std::vector<std::uint8_t>& bits) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bits) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

// output[y,x,o] = bias[o] + sum over the receptive field of input * kernel.
// input H x W x Cin, kernel Kh x Kw x Cin x Cout, bias Cout.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, Padding padding) {
  detail::require_rank(input, 3, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  detail::require_rank(bias, 1, "conv2d bias");
  detail::require_same_tape(input, kernel);
  const auto& in = input.value();
  const auto& k = kernel.value();
  const std::size_t H = in.dim(0), W = in.dim(1), Cin = in.dim(2);
  const std::size_t Kh = k.dim(0), Kw = k.dim(1), Cout = k.dim(3);
  if (k.dim(2) != Cin) {
    throw ShapeError("conv2d: input " + to_string(in.dims()) + " has " + std::to_string(Cin) +
                     " channels but kernel " + to_string(k.dims()) + " expects " +
                     std::to_string(k.dim(2)));
  }
  if (bias.value().dim(0) != Cout) {
    throw ShapeError("conv2d: kernel output channels " + std::to_string(Cout) +
                     " vs bias length " + std::to_string(bias.value().dim(0)));
  }
  std::size_t pad_y = 0, pad_x = 0, Ho, Wo;
  if (padding == Padding::kSame) {
    if (Kh % 2 == 0 || Kw % 2 == 0) {
      throw ShapeError("conv2d: same padding needs odd kernel, got " +
                       to_string(k.dims()));
    }
    pad_y = (Kh - 1) / 2;
    pad_x = (Kw - 1) / 2;
    Ho = H;
    Wo = W;
  } else {
    if (Kh > H || Kw > W) {
      throw ShapeError("conv2d: kernel " + to_string(k.dims()) +
                       " larger than input " + to_string(in.dims()));
    }
    Ho = H - Kh + 1;
    Wo = W - Kw + 1;
  }

  Tensor<T> out({Ho, Wo, Cout});
  const T* ip = in.data().data();
  const T* kp = k.data().data();
  const T* bp = bias.value().data().data();
  T* op = out.data().data();
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      T* o = op + (oy * Wo + ox) * Cout;
      for (std::size_t co = 0; co < Cout; ++co) o[co] = bp[co];
      for (std::size_t ky = 0; ky < Kh; ++ky) {
        const std::ptrdiff_t iy = std::ptrdiff_t(oy + ky) - std::ptrdiff_t(pad_y);
        if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
        for (std::size_t kx = 0; kx < Kw; ++kx) {
          const std::ptrdiff_t ix =
              std::ptrdiff_t(ox + kx) - std::ptrdiff_t(pad_x);
          if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
          const T* irow = ip + (iy * W + ix) * Cin;
          const T* kbase = kp + (ky * Kw + kx) * Cin * Cout;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const T v = irow[ci];
            if (v == T{0}) continue;
            const T* krow = kbase + ci * Cout;
#pragma omp simd
            for (std::size_t co = 0; co < Cout; ++co) o[co] += v * krow[co];
          }
        }
      }
    }
  }

  const std::size_t in_id = input.id, k_id = kernel.id, b_id = bias.id;
  return input.tape->record(
      "conv2d", std::move(out), {in_id, k_id, b_id},
      [=](Tape<T>& tape, std::size_t self) {
        const T* gout = tape.grad(self).data().data();
        const T* ip = tape.value(in_id).data().data();
        const T* kp = tape.value(k_id).data().data();
        const bool need_in = tape.requires_grad(in_id);
        const bool need_k = tape.requires_grad(k_id);
        const bool need_b = tape.requires_grad(b_id);
        T* gin = need_in ? tape.grad(in_id).data().data() : nullptr;
        T* gk = need_k ? tape.grad(k_id).data().data() : nullptr;
        T* gb = need_b ? tape.grad(b_id).data().data() : nullptr;
        // Kernel transposed to [tap][co][ci] so the input-gradient inner
        // loop runs over contiguous memory.
        std::vector<T> kt;
        if (need_in) {
          kt.resize(Kh * Kw * Cin * Cout);
          for (std::size_t tap = 0; tap < Kh * Kw; ++tap)
            for (std::size_t ci = 0; ci < Cin; ++ci)
              for (std::size_t co = 0; co < Cout; ++co)
                kt[(tap * Cout + co) * Cin + ci] =
                    kp[(tap * Cin + ci) * Cout + co];
        }
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const T* g = gout + (oy * Wo + ox) * Cout;
            if (gb) {
              for (std::size_t co = 0; co < Cout; ++co) gb[co] += g[co];
            }
            for (std::size_t ky = 0; ky < Kh; ++ky) {
              const std::ptrdiff_t iy =
                  std::ptrdiff_t(oy + ky) - std::ptrdiff_t(pad_y);
              if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
              for (std::size_t kx = 0; kx < Kw; ++kx) {
                const std::ptrdiff_t ix =
                    std::ptrdiff_t(ox + kx) - std::ptrdiff_t(pad_x);
                if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
                const std::size_t tap = ky * Kw + kx;
                const std::size_t ioff = (iy * W + ix) * Cin;
                if (gk) {
                  T* gkb = gk + tap * Cin * Cout;
                  for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const T v = ip[ioff + ci];
                    if (v == T{0}) continue;
                    T* gkr = gkb + ci * Cout;
#pragma omp simd
                    for (std::size_t co = 0; co < Cout; ++co) gkr[co] += v * g[co];
                  }
                }
                if (gin) {
                  T* gi = gin + ioff;
                  const T* ktb = kt.data() + tap * Cout * Cin;
                  for (std::size_t co = 0; co < Cout; ++co) {
                    const T gv = g[co];
                    if (gv == T{0}) continue;
                    const T* ktr = ktb + co * Cin;
#pragma omp simd
                    for (std::size_t ci = 0; ci < Cin; ++ci) gi[ci] += gv * ktr[ci];
                  }
                }
              }
            }
          }
        }
      });
}

// Valid max pooling over H x W x C with a square window.
template <typename T>
Var<T> max_pool(Var<T> input, std::size_t window, std::size_t stride) {
  detail::require_rank(input, 3, "max_pool");
  const auto& in = input.value();
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
  if (window == 0 || stride == 0 || window > H || window > W) {
    throw ShapeError("max_pool: window " + std::to_string(window) +
                     " incompatible with input " + to_string(in.dims()));
  }
  const std::size_t Ho = (H - window) / stride + 1;
  const std::size_t Wo = (W - window) / stride + 1;
  Tensor<T> out({Ho, Wo, C});
  std::vector<std::uint32_t> argmax(Ho * Wo * C);
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((oy * stride) * W + ox * stride) * C + c;
        T bv = in[best];
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx =
                ((oy * stride + ky) * W + ox * stride + kx) * C + c;
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (oy * Wo + ox) * C + c;
        out[o] = bv;
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  std::uint64_t h = 1469598103934665603ULL;
  for (auto a : argmax) h = (h ^ a) * 1099511628211ULL;
  input.tape->note_kink(h);
  const std::size_t in_id = input.id;
  return input.tape->record(
      "max_pool", std::move(out), {in_id},
      [in_id, argmax = std::move(argmax)](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self);
        auto& gi = tape.grad(in_id);
        for (std::size_t o = 0; o < argmax.size(); ++o) gi[argmax[o]] += g[o];
      });
}

// out[j] = bias[j] + sum_i input[i] * weight[i, j].
template <typename T>
Var<T> fully_connected(Var<T> input, Var<T> weight, Var<T> bias) {
  detail::require_rank(input, 1, "fully_connected input");
  detail::require_rank(weight, 2, "fully_connected weight");
  detail::require_rank(bias, 1, "fully_connected bias");
  detail::require_same_tape(input, weight);
  const auto& x = input.value();
  const auto& w = weight.value();
  const std::size_t n = w.dim(0), m = w.dim(1);
  if (x.dim(0) != n) {
    throw ShapeError("fully_connected: input length " +
                     std::to_string(x.dim(0)) + " vs weight rows " +
                     std::to_string(n));
  }
  if (bias.value().dim(0) != m) {
    throw ShapeError("fully_connected: weight columns " + std::to_string(m) +
                     " vs bias length " +
                     std::to_string(bias.value().dim(0)));
  }
  Tensor<T> out = bias.value();
  T* o = out.data().data();
  const T* wp = w.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    if (v == T{0}) continue;
    const T* row = wp + i * m;
#pragma omp simd
    for (std::size_t j = 0; j < m; ++j) o[j] += v * row[j];
  }
  const std::size_t x_id = input.id, w_id = weight.id, b_id = bias.id;
  return input.tape->record(
      "fully_connected", std::move(out), {x_id, w_id, b_id},
      [=](Tape<T>& tape, std::size_t self) {
        const T* g = tape.grad(self).data().data();
        const T* xp = tape.value(x_id).data().data();
        const T* wp = tape.value(w_id).data().data();
        if (tape.requires_grad(b_id)) {
          T* gb = tape.grad(b_id).data().data();
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[j];
        }
        if (tape.requires_grad(w_id)) {
          T* gw = tape.grad(w_id).data().data();
          for (std::size_t i = 0; i < n; ++i) {
            const T v = xp[i];
            if (v == T{0}) continue;
            T* row = gw + i * m;
#pragma omp simd
            for (std::size_t j = 0; j < m; ++j) row[j] += v * g[j];
          }
        }
        if (tape.requires_grad(x_id)) {
          T* gx = tape.grad(x_id).data().data();
          for (std::size_t i = 0; i < n; ++i) {
            const T* row = wp + i * m;
            T s{0};
#pragma omp simd reduction(+ : s)
            for (std::size_t j = 0; j < m; ++j) s += row[j] * g[j];
            gx[i] += s;
          }
        }
      });
}

namespace detail {

// Elementwise unary op whose derivative is a function of (input, output).
template <typename T, typename F, typename D>
Var<T> unary(const char* name, Var<T> x, F f, D dfdx) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = f(v);
  const std::size_t x_id = x.id;
  return x.tape->record(name, std::move(out), {x_id},
                        [x_id, dfdx](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          const auto& xv = tape.value(x_id);
                          const auto& yv = tape.value(self);
                          auto& gx = tape.grad(x_id);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            gx[i] += g[i] * dfdx(xv[i], yv[i]);
                        });
}

}  // namespace detail

template <typename T>
Var<T> relu(Var<T> x) {
  std::vector<std::uint8_t> mask(x.value().size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = x.value()[i] > T{0};
  x.tape->note_kink(detail::hash_bits(mask));
  return detail::unary(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(
      "sigmoid", x, [](T v) { return T{1} / (T{1} + std::exp(-v)); },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return detail::unary(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

// Max-shifted softmax over a rank-1 tensor.
template <typename T>
Var<T> softmax(Var<T> x) {
  detail::require_rank(x, 1, "softmax");
  const auto& in = x.value();
  Tensor<T> out(in.dims());
  T mx = in[0];
  for (std::size_t i = 1; i < in.size(); ++i) mx = std::max(mx, in[i]);
  T sum{0};
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (auto& v : out.data()) v /= sum;
  const std::size_t x_id = x.id;
  return x.tape->record("softmax", std::move(out), {x_id},
                        [x_id](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          const auto& y = tape.value(self);
                          T dot{0};
                          for (std::size_t i = 0; i < y.size(); ++i)
                            dot += y[i] * g[i];
                          auto& gx = tape.grad(x_id);
                          for (std::size_t i = 0; i < y.size(); ++i)
                            gx[i] += y[i] * (g[i] - dot);
                        });
}

enum class BinaryOp { kAdd, kMul };

template <typename T>
Var<T> elementwise(BinaryOp op, Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  require_same_dims(a.dims(), b.dims(), "elementwise");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = op == BinaryOp::kAdd ? out[i] + bv[i] : out[i] * bv[i];
  }
  const std::size_t a_id = a.id, b_id = b.id;
  return a.tape->record(
      op == BinaryOp::kAdd ? "add" : "mul", std::move(out), {a_id, b_id},
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self);
        if (tape.requires_grad(a_id)) {
          auto& ga = tape.grad(a_id);
          const auto& bv = tape.value(b_id);
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += op == BinaryOp::kAdd ? g[i] : g[i] * bv[i];
        }
        if (tape.requires_grad(b_id)) {
          auto& gb = tape.grad(b_id);
          const auto& av = tape.value(a_id);
          for (std::size_t i = 0; i < g.size(); ++i)
            gb[i] += op == BinaryOp::kAdd ? g[i] : g[i] * av[i];
        }
      });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return elementwise(BinaryOp::kAdd, a, b);
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return elementwise(BinaryOp::kMul, a, b);
}

// Sum of equally shaped values.
template <typename T>
Var<T> add_n(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ContractError("add_n of nothing");
  Tensor<T> out = xs[0].value();
  std::vector<std::size_t> ids{xs[0].id};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_dims(out.dims(), xs[k].dims(), "add_n");
    const auto& v = xs[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    ids.push_back(xs[k].id);
  }
  return xs[0].tape->record("add_n", std::move(out), ids,
                            [ids](Tape<T>& tape, std::size_t self) {
                              const auto& g = tape.grad(self);
                              for (std::size_t id : ids) {
                                if (!tape.requires_grad(id)) continue;
                                auto& gi = tape.grad(id);
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  gi[i] += g[i];
                              }
                            });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape dims) {
  Tensor<T> out = x.value().reshaped(std::move(dims));
  const std::size_t x_id = x.id;
  return x.tape->record("reshape", std::move(out), {x_id},
                        [x_id](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          auto& gx = tape.grad(x_id);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            gx[i] += g[i];
                        });
}

// Two H x W maps -> one H x W x 2 map (a in channel 0, b in channel 1).
template <typename T>
Var<T> stack_channels(Var<T> a, Var<T> b) {
  detail::require_rank(a, 2, "stack_channels");
  detail::require_same_tape(a, b);
  require_same_dims(a.dims(), b.dims(), "stack_channels");
  const std::size_t H = a.value().dim(0), W = a.value().dim(1);
  Tensor<T> out({H, W, 2});
  for (std::size_t p = 0; p < H * W; ++p) {
    out[2 * p] = a.value()[p];
    out[2 * p + 1] = b.value()[p];
  }
  const std::size_t a_id = a.id, b_id = b.id;
  return a.tape->record("stack_channels", std::move(out), {a_id, b_id},
                        [=](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          const std::size_t n = H * W;
                          if (tape.requires_grad(a_id)) {
                            auto& ga = tape.grad(a_id);
                            for (std::size_t p = 0; p < n; ++p) ga[p] += g[2 * p];
                          }
                          if (tape.requires_grad(b_id)) {
                            auto& gb = tape.grad(b_id);
                            for (std::size_t p = 0; p < n; ++p)
                              gb[p] += g[2 * p + 1];
                          }
                        });
}

// Softmax over all H*W attention cells, then the weighted sum of the
// per-cell feature vectors.
template <typename T>
Var<T> attention_weighted_pool(Var<T> features, Var<T> attention) {
  detail::require_rank(features, 3, "attention_weighted_pool features");
  detail::require_rank(attention, 2, "attention_weighted_pool attention");
  detail::require_same_tape(features, attention);
  const auto& f = features.value();
  const auto& a = attention.value();
  const std::size_t H = f.dim(0), W = f.dim(1), C = f.dim(2);
  if (a.dim(0) != H || a.dim(1) != W) {
    throw ShapeError("attention_weighted_pool: features " + to_string(f.dims()) +
                     " vs attention " + to_string(a.dims()));
  }
  const std::size_t n = H * W;
  std::vector<T> w(n);
  T mx = a[0];
  for (std::size_t p = 1; p < n; ++p) mx = std::max(mx, a[p]);
  T sum{0};
  for (std::size_t p = 0; p < n; ++p) {
    w[p] = std::exp(a[p] - mx);
    sum += w[p];
  }
  for (auto& v : w) v /= sum;
  Tensor<T> out({C});
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < C; ++c) out[c] += w[p] * f[p * C + c];
  }
  const std::size_t f_id = features.id, a_id = attention.id;
  return features.tape->record(
      "attention_weighted_pool", std::move(out), {f_id, a_id},
      [=, w = std::move(w)](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self);
        if (tape.requires_grad(f_id)) {
          auto& gf = tape.grad(f_id);
          for (std::size_t p = 0; p < n; ++p)
            for (std::size_t c = 0; c < C; ++c) gf[p * C + c] += w[p] * g[c];
        }
        if (tape.requires_grad(a_id)) {
          const auto& f = tape.value(f_id);
          std::vector<T> gw(n);
          T dot{0};
          for (std::size_t p = 0; p < n; ++p) {
            T s{0};
            for (std::size_t c = 0; c < C; ++c) s += f[p * C + c] * g[c];
            gw[p] = s;
            dot += w[p] * s;
          }
          auto& ga = tape.grad(a_id);
          for (std::size_t p = 0; p < n; ++p) ga[p] += w[p] * (gw[p] - dot);
        }
      });
}

// Mean over spatial positions of an H x W x C map.
template <typename T>
Var<T> global_avg_pool(Var<T> features) {
  detail::require_rank(features, 3, "global_avg_pool");
  const auto& f = features.value();
  const std::size_t n = f.dim(0) * f.dim(1), C = f.dim(2);
  Tensor<T> out({C});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t c = 0; c < C; ++c) out[c] += f[p * C + c];
  for (auto& v : out.data()) v /= static_cast<T>(n);
  const std::size_t f_id = features.id;
  return features.tape->record(
      "global_avg_pool", std::move(out), {f_id},
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self);
        auto& gf = tape.grad(f_id);
        const T inv = T{1} / static_cast<T>(n);
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t c = 0; c < C; ++c) gf[p * C + c] += g[c] * inv;
      });
}

// Concatenation of two rank-1 tensors.
template <typename T>
Var<T> concat(Var<T> a, Var<T> b) {
  detail::require_rank(a, 1, "concat");
  detail::require_rank(b, 1, "concat");
  detail::require_same_tape(a, b);
  const std::size_t na = a.value().size(), nb = b.value().size();
  Tensor<T> out({na + nb});
  std::copy(a.value().data().begin(), a.value().data().end(), out.data().begin());
  std::copy(b.value().data().begin(), b.value().data().end(),
            out.data().begin() + na);
  const std::size_t a_id = a.id, b_id = b.id;
  return a.tape->record("concat", std::move(out), {a_id, b_id},
                        [=](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          if (tape.requires_grad(a_id)) {
                            auto& ga = tape.grad(a_id);
                            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                          }
                          if (tape.requires_grad(b_id)) {
                            auto& gb = tape.grad(b_id);
                            for (std::size_t i = 0; i < nb; ++i)
                              gb[i] += g[na + i];
                          }
                        });
}

// Elements [offset, offset + length) of a rank-1 tensor.
template <typename T>
Var<T> slice(Var<T> x, std::size_t offset, std::size_t length) {
  detail::require_rank(x, 1, "slice");
  if (offset + length > x.value().size() || length == 0) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") of " +
                     to_string(x.dims()));
  }
  Tensor<T> out({length});
  for (std::size_t i = 0; i < length; ++i) out[i] = x.value()[offset + i];
  const std::size_t x_id = x.id;
  return x.tape->record("slice", std::move(out), {x_id},
                        [=](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          auto& gx = tape.grad(x_id);
                          for (std::size_t i = 0; i < length; ++i)
                            gx[offset + i] += g[i];
                        });
}

// Row `index` of a rank-2 table (embedding lookup).
template <typename T>
Var<T> row(Var<T> table, std::size_t index) {
  detail::require_rank(table, 2, "row");
  const std::size_t V = table.value().dim(0), E = table.value().dim(1);
  if (index >= V) {
    throw ShapeError("row index " + std::to_string(index) + " out of range " +
                     to_string(table.dims()));
  }
  Tensor<T> out({E});
  for (std::size_t j = 0; j < E; ++j) out[j] = table.value()[index * E + j];
  const std::size_t t_id = table.id;
  return table.tape->record("row", std::move(out), {t_id},
                            [=](Tape<T>& tape, std::size_t self) {
                              const auto& g = tape.grad(self);
                              auto& gt = tape.grad(t_id);
                              for (std::size_t j = 0; j < E; ++j)
                                gt[index * E + j] += g[j];
                            });
}

inline constexpr double kNllEpsilon = 1e-12;

// -ln(predicted[target] + 1e-12) for a predicted distribution.
template <typename T>
Var<T> nll_loss(Var<T> predicted, std::size_t target) {
  detail::require_rank(predicted, 1, "nll_loss");
  const auto& p = predicted.value();
  if (target >= p.size()) {
    throw ContractError("nll_loss: target " + std::to_string(target) +
                        " out of range for " + std::to_string(p.size()) +
                        " classes");
  }
  const T eps = static_cast<T>(kNllEpsilon);
  Tensor<T> out = Tensor<T>::scalar(-std::log(p[target] + eps));
  const std::size_t p_id = predicted.id;
  return predicted.tape->record(
      "nll_loss", std::move(out), {p_id},
      [=](Tape<T>& tape, std::size_t self) {
        const T g = tape.grad(self)[0];
        const T pt = tape.value(p_id)[target];
        tape.grad(p_id)[target] += -g / (pt + eps);
      });
}

}  // namespace nmn
