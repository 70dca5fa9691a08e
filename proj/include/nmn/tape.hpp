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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/parameter_store.hpp"
#include "nmn/tensor.hpp"

namespace nmn {

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& dims() const { return value().dims(); }
};

// Reverse-mode autodiff tape. Entries are appended in execution order, so
// the list is already topologically sorted; backward walks it once in
// reverse.
template <typename T>
class Tape {
 public:
  // Called with the tape and the index of the entry being differentiated.
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Entry {
    const char* op = "leaf";
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var<T> leaf(Tensor<T> value, bool requires_grad) {
    check_finite("leaf", value);
    Entry e;
    e.value = std::move(value);
    e.requires_grad = requires_grad;
    entries_.push_back(std::move(e));
    return {this, entries_.size() - 1};
  }

  // Each parameter appears at most once per tape; repeated uses share the
  // leaf so their gradient contributions sum there.
  Var<T> param(Parameter<T>& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return {this, it->second};
    Entry e;
    e.op = "param";
    e.value = p.value;
    e.requires_grad = true;
    e.param = &p;
    entries_.push_back(std::move(e));
    param_ids_.emplace(&p, entries_.size() - 1);
    return {this, entries_.size() - 1};
  }

  // Appends an op result. `fn` is dropped when no input needs a gradient.
  Var<T> record(const char* op, Tensor<T> value,
                std::vector<std::size_t> inputs, Backward fn) {
    check_finite(op, value);
    Entry e;
    e.op = op;
    e.value = std::move(value);
    for (std::size_t i : inputs) e.requires_grad |= entries_[i].requires_grad;
    if (e.requires_grad) e.backward = std::move(fn);
    e.inputs = std::move(inputs);
    entries_.push_back(std::move(e));
    return {this, entries_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return entries_.at(v.id).value; }
  const Tensor<T>& value(std::size_t id) const { return entries_[id].value; }
  bool requires_grad(std::size_t id) const {
    return entries_[id].requires_grad;
  }

  // Gradient buffer of an entry; valid during and after backward().
  Tensor<T>& grad(std::size_t id) { return entries_[id].grad; }
  const Tensor<T>& grad(Var<T> v) const {
    if (!backward_done_) throw ContractError("grad() before backward()");
    return entries_.at(v.id).grad;
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t id) const { return entries_.at(id); }

  // Accumulates d(loss)/d(param) into every parameter reached from `loss`.
  void backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("loss from another tape");
    if (backward_done_) throw ContractError("backward() called twice");
    const auto& lv = entries_.at(loss.id).value;
    if (lv.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got dims " +
                          to_string(lv.dims()));
    }
    for (auto& e : entries_) {
      if (e.requires_grad) e.grad = Tensor<T>(e.value.dims());
    }
    backward_done_ = true;
    if (!entries_[loss.id].requires_grad) return;
    entries_[loss.id].grad[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Entry& e = entries_[i];
      if (e.backward) {
        e.backward(*this, i);
        for (std::size_t in : e.inputs) {
          if (entries_[in].requires_grad) check_finite(e.op, entries_[in].grad);
        }
      }
    }
    for (auto& e : entries_) {
      if (!e.param) continue;
      auto g = e.param->grad.data();
      auto src = e.grad.data();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
      e.param->touched = true;
    }
  }

  // Fingerprint of every non-differentiable branch taken (relu masks,
  // max-pool argmaxes). Finite-difference checks compare it across
  // perturbations to detect kink crossings.
  std::uint64_t kink_signature() const { return kinks_; }
  void note_kink(std::uint64_t h) {
    kinks_ ^= h + 0x9E3779B97F4A7C15ULL + (kinks_ << 6) + (kinks_ >> 2);
  }

 private:
  static void check_finite(const char* op, const Tensor<T>& t) {
    if (!t.all_finite()) {
      throw NumericalError(std::string("non-finite value produced by ") + op);
    }
  }

  std::vector<Entry> entries_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_ids_;
  std::uint64_t kinks_ = 0;
  bool backward_done_ = false;
};

}  // namespace nmn
