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

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/tensor.hpp"

namespace nmn {

// kGlorotMagnitude draws |U(-a, a)|: a monotone-increasing start for
// weights that merge attentions.
enum class Init { kGlorotUniform, kGlorotMagnitude, kZeros };

// One named trainable tensor plus its gradient buffer and adadelta
// accumulators. All four share dims.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> sq_grad;    // E[g^2]
  Tensor<T> sq_delta;   // E[dx^2]
  bool touched = false;  // received gradient since the last optimizer step

  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.dims()),
        sq_grad(value.dims()),
        sq_delta(value.dims()) {}

  void zero_grad() {
    grad.fill(T{0});
    touched = false;
  }
};

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Fan-in / fan-out for the layouts used here: FC weights are n x m,
// conv kernels are Kh x Kw x Cin x Cout, embedding tables are V x E.
inline std::pair<std::size_t, std::size_t> fans(const Shape& dims) {
  if (dims.size() == 4) {
    std::size_t k = dims[0] * dims[1];
    return {k * dims[2], k * dims[3]};
  }
  if (dims.size() == 2) return {dims[0], dims[1]};
  if (dims.size() == 1) return {dims[0], dims[0]};
  return {1, 1};
}

// Named registry of parameters. Looking a name up always yields the same
// object, which is what ties weights across assembled networks.
// std::map keeps node addresses stable and iteration order deterministic.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  std::uint64_t seed() const { return seed_; }

  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }

  Parameter<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw DataError("unknown parameter " + name);
    return it->second;
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw DataError("unknown parameter " + name);
    return it->second;
  }

  // Returns the existing parameter or creates it with a deterministic
  // initialization derived from (seed, name).
  Parameter<T>& get_or_create(const std::string& name, const Shape& dims,
                              Init init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (it->second.value.dims() != dims) {
        throw ShapeError("parameter " + name + " exists with dims " +
                         to_string(it->second.value.dims()) +
                         ", requested " + to_string(dims));
      }
      return it->second;
    }
    return create(name, dims, init);
  }

  Parameter<T>& create(const std::string& name, const Shape& dims, Init init) {
    if (contains(name)) throw ContractError("parameter exists: " + name);
    auto [it, ok] =
        params_.emplace(name, Parameter<T>(name, initial_value(name, dims, init)));
    return it->second;
  }

  // Inserts a fully specified parameter (checkpoint loading).
  Parameter<T>& insert(const std::string& name, Tensor<T> value) {
    if (contains(name)) throw DataError("duplicate parameter " + name);
    auto [it, ok] = params_.emplace(name, Parameter<T>(name, std::move(value)));
    return it->second;
  }

  Tensor<T> initial_value(const std::string& name, const Shape& dims,
                          Init init) const {
    Tensor<T> t(dims);
    if (init == Init::kZeros) return t;
    auto [fan_in, fan_out] = fans(dims);
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::mt19937_64 rng(fnv1a(name, seed_ * 0x9E3779B97F4A7C15ULL + 1));
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& v : t.data()) {
      const double x = dist(rng);
      v = static_cast<T>(init == Init::kGlorotMagnitude ? std::abs(x) : x);
    }
    return t;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Deep copy of all values (snapshots for best-epoch selection).
  std::map<std::string, Tensor<T>> snapshot_values() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.value);
    return out;
  }

 private:
  std::uint64_t seed_;
  std::map<std::string, Parameter<T>> params_;
};

// Bias-like names get zeros, everything else Glorot uniform.
inline Init default_init(std::string_view role) {
  return role == "bias" ? Init::kZeros : Init::kGlorotUniform;
}

}  // namespace nmn
