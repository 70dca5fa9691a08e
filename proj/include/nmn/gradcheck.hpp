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
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nmn/encoders.hpp"
#include "nmn/layout.hpp"
#include "nmn/modules.hpp"
#include "nmn/network.hpp"
#include "nmn/query.hpp"

namespace nmn {

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-5;
  // Coordinates checked per tensor; larger tensors are sampled uniformly.
  std::size_t max_coords = 0;  // 0: all
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string op;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a relu / max-pool kink
  double max_error = 0;
  std::string worst;  // tensor[coord] with the largest error
  bool passed() const { return checked > 0 && max_error <= tolerance; }
  double tolerance = 1e-5;
};

// Builds the graph under test from the differentiable inputs. Parameters
// come from the store, so they are checked too.
using GradGraph = std::function<Var<double>(Tape<double>&, ParameterStore<double>&,
                                            const std::vector<Var<double>>&)>;

namespace detail {

// Reduces any output to a scalar through a fixed random projection so every
// output coordinate contributes a distinct weight.
inline Var<double> project_to_scalar(Var<double> out, std::uint64_t seed) {
  const std::size_t n = out.value().size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<double> w({n, 1});
  for (auto& v : w.data()) v = u(rng);
  auto& tape = *out.tape;
  return fully_connected(reshape(out, {n}), tape.constant(std::move(w)),
                         tape.constant(Tensor<double>({1})));
}

inline std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max,
                                            std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (max == 0 || n <= max) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// Central finite differences against the tape's analytic gradients, for
// every input tensor and every parameter the graph touches. Error is
// |analytic - numeric| / max(1, |analytic|).
inline GradCheckResult check_gradients(const std::string& op, ParameterStore<double>& store,
                                       std::vector<Tensor<double>> inputs,
                                       const GradGraph& graph,
                                       const GradCheckOptions& opt = {}) {
  struct Eval {
    double loss;
    std::uint64_t kinks;
  };
  auto run = [&](bool differentiate, std::vector<Tensor<double>>* input_grads) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    auto loss = detail::project_to_scalar(graph(tape, store, vars), opt.seed);
    if (differentiate) {
      store.zero_grad();
      tape.backward(loss);
      for (const auto& v : vars) input_grads->push_back(tape.grad(v));
    }
    return Eval{loss.value()[0], tape.kink_signature()};
  };

  std::vector<Tensor<double>> input_grads;
  const Eval base = run(true, &input_grads);

  GradCheckResult res;
  res.op = op;
  res.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  auto probe = [&](const std::string& label, std::span<double> values,
                   std::span<const double> analytic) {
    for (std::size_t k : detail::pick_coords(values.size(), opt.max_coords, rng)) {
      const double saved = values[k];
      values[k] = saved + opt.step;
      const Eval plus = run(false, nullptr);
      values[k] = saved - opt.step;
      const Eval minus = run(false, nullptr);
      values[k] = saved;
      if (plus.kinks != base.kinks || minus.kinks != base.kinks) {
        ++res.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2 * opt.step);
      const double err =
          std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(analytic[k]));
      ++res.checked;
      if (err > res.max_error || res.worst.empty()) {
        res.max_error = err;
        res.worst = label + "[" + std::to_string(k) + "]";
      }
    }
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    probe("input" + std::to_string(i), inputs[i].data(), input_grads[i].data());
  }
  for (auto& [name, p] : store) {
    if (!p.touched) continue;
    const Tensor<double> analytic = p.grad;
    probe(name, p.value.data(), analytic.data());
  }
  store.zero_grad();
  return res;
}

inline Tensor<double> random_tensor(const Shape& dims, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(dims);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Named checks for every parameterized operation plus the primitive ops
// they are built from. Sizes are reduced where the full-size tensor would
// only repeat the same code path.
inline std::vector<std::string> grad_check_names() {
  return {"conv2d",   "conv2d-valid", "fully_connected", "max_pool", "softmax",
          "sigmoid",  "tanh",         "attention_pool",  "find",     "transform",
          "combine",  "describe",     "measure",         "lstm",     "fusion",
          "vis+lstm", "end-to-end"};
}

inline GradCheckResult run_grad_check(const std::string& name,
                                      const GradCheckOptions& base = {}) {
  GradCheckOptions opt = base;
  std::mt19937_64 rng(opt.seed);
  ParameterStore<double> store(opt.seed);
  ModuleConfig small;
  small.feature_channels = 6;
  small.att_h = small.att_w = 5;
  small.transform_hidden = 8;
  small.d_ans = 3;
  auto features = [&] { return random_tensor({5, 5, 6}, rng); };
  auto attention = [&] { return random_tensor({5, 5}, rng); };
  // Module parameters are created on first use; draw them before the
  // analytic pass so the check sees non-trivial biases too.
  auto jitter_biases = [&] {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& [n, p] : store)
      if (n.ends_with(".bias"))
        for (auto& v : p.value.data()) v = u(rng);
  };
  auto prime = [&](const GradGraph& g, const std::vector<Tensor<double>>& in) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : in) vars.push_back(tape.constant(t));
    g(tape, store, vars);
    jitter_biases();
  };
  auto check = [&](const std::vector<Tensor<double>>& in, const GradGraph& g) {
    prime(g, in);
    return check_gradients(name, store, in, g, opt);
  };

  if (name == "conv2d" || name == "conv2d-valid") {
    const Padding pad = name == "conv2d" ? Padding::kSame : Padding::kValid;
    return check({random_tensor({7, 6, 3}, rng), random_tensor({3, 3, 3, 4}, rng),
                  random_tensor({4}, rng)},
                 [pad](auto&, auto&, const auto& v) { return conv2d(v[0], v[1], v[2], pad); });
  }
  if (name == "fully_connected") {
    return check({random_tensor({7}, rng), random_tensor({7, 5}, rng), random_tensor({5}, rng)},
                 [](auto&, auto&, const auto& v) { return fully_connected(v[0], v[1], v[2]); });
  }
  if (name == "max_pool") {
    return check({random_tensor({8, 8, 3}, rng)},
                 [](auto&, auto&, const auto& v) { return max_pool(v[0], 3, 1); });
  }
  if (name == "softmax") {
    return check({random_tensor({6}, rng, -3, 3)},
                 [](auto&, auto&, const auto& v) { return softmax(v[0]); });
  }
  if (name == "sigmoid") {
    return check({random_tensor({6}, rng, -3, 3)},
                 [](auto&, auto&, const auto& v) { return sigmoid(v[0]); });
  }
  if (name == "tanh") {
    return check({random_tensor({6}, rng, -3, 3)},
                 [](auto&, auto&, const auto& v) { return tanh(v[0]); });
  }
  if (name == "attention_pool") {
    return check({features(), attention()}, [](auto&, auto&, const auto& v) {
      return attention_weighted_pool(v[0], v[1]);
    });
  }
  if (name == "find") {
    return check({features()}, [small](auto& t, auto& s, const auto& v) {
      return find_forward(t, s, small, "red", v[0]);
    });
  }
  if (name == "transform") {
    return check({attention()}, [small](auto& t, auto& s, const auto& v) {
      return transform_forward(t, s, small, "above", v[0]);
    });
  }
  if (name == "combine") {
    return check({attention(), attention()}, [small](auto& t, auto& s, const auto& v) {
      return combine_forward(t, s, small, "and", v[0], v[1]);
    });
  }
  if (name == "describe") {
    return check({features(), attention()}, [small](auto& t, auto& s, const auto& v) {
      return describe_forward(t, s, small, "color", v[0], v[1]);
    });
  }
  if (name == "measure") {
    return check({attention()}, [small](auto& t, auto& s, const auto& v) {
      return measure_forward(t, s, small, "is", v[0]);
    });
  }
  if (name == "lstm") {
    const LstmConfig lc{4, 5, 6};
    return check({random_tensor({5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)},
                 [lc](auto& t, auto& s, const auto& v) { return lstm_run(t, s, lc, v); });
  }
  if (name == "fusion") {
    const LstmConfig lc{5, 4, 6};
    return check({random_tensor({3}, rng)}, [lc](auto& t, auto& s, const auto& v) {
      auto h = lstm_encode(t, s, lc, {2, 4, 1});
      return fuse_and_classify(t, s, v[0], std::optional<Var<double>>(h), 2);
    });
  }
  if (name == "vis+lstm") {
    ConvStackConfig cc = ConvStackConfig::for_grid(12, 3, 4);
    cc.layers[0].out_channels = 3;
    const LstmConfig lc{5, 4, 6};
    opt.max_coords = opt.max_coords ? opt.max_coords : 24;
    return check({random_tensor({12, 12, 3}, rng, 0, 1)},
                 [cc, lc](auto& t, auto& s, const auto& v) {
                   return vis_lstm_baseline(t, s, cc, lc, v[0], {2, 3}, 2);
                 });
  }
  if (name == "end-to-end") {
    // Full is(red, above(circle)) network over the conv stack at the
    // default image and feature sizes, checked on sampled coordinates.
    const auto layout = layout_from_query(parse_query("is(red,above(circle))"), Domain::kShapes);
    ModuleConfig mc;
    mc.d_ans = 2;
    const ConvStackConfig cc;
    opt.max_coords = opt.max_coords ? opt.max_coords : 12;
    return check({random_tensor({30, 30, 3}, rng, 0, 1)},
                 [layout, mc, cc](auto& t, auto& s, const auto& v) {
                   Network<double> net(layout, s, mc);
                   auto rep = net(t, conv_features(t, s, cc, v[0]));
                   return fuse_and_classify(t, s, rep, std::optional<Var<double>>(), 2);
                 });
  }
  throw ContractError("unknown grad-check op '" + name + "'");
}

}  // namespace nmn
