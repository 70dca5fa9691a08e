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
#include <string>

#include "nmn/error.hpp"
#include "nmn/parameter_store.hpp"

namespace nmn {

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  // Rescale the joint gradient of the touched parameters to this global
  // L2 norm when it is exceeded; 0 disables clipping.
  double clip_norm = 10.0;
  // L2 penalty coefficient added to the (clipped) gradient of touched
  // parameters; 0 leaves the plain adadelta update.
  double weight_decay = 0.0;
};

// One adadelta update over the parameters that received gradient since the
// last step. Untouched parameters and their accumulators are left alone.
// Gradients are consumed (zeroed) afterwards.
template <typename T>
void adadelta_step(ParameterStore<T>& store, const AdadeltaConfig& cfg = {}) {
  double norm_sq = 0;
  for (auto& [name, p] : store) {
    if (!p.touched) continue;
    for (T g : p.grad.data()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in " + name);
      }
      norm_sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  double scale = 1.0;
  if (cfg.clip_norm > 0 && norm_sq > cfg.clip_norm * cfg.clip_norm) {
    scale = cfg.clip_norm / std::sqrt(norm_sq);
  }
  const T rho = static_cast<T>(cfg.rho);
  const T one_minus = static_cast<T>(1.0 - cfg.rho);
  const T eps = static_cast<T>(cfg.epsilon);
  const T decay = static_cast<T>(cfg.weight_decay);
  for (auto& [name, p] : store) {
    if (!p.touched) continue;
    auto x = p.value.data();
    auto g = p.grad.data();
    auto eg2 = p.sq_grad.data();
    auto edx2 = p.sq_delta.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T gi = static_cast<T>(g[i] * scale) + decay * x[i];
      eg2[i] = rho * eg2[i] + one_minus * gi * gi;
      const T delta = -std::sqrt(edx2[i] + eps) / std::sqrt(eg2[i] + eps) * gi;
      edx2[i] = rho * edx2[i] + one_minus * delta * delta;
      x[i] += delta;
    }
    p.zero_grad();
  }
}

}  // namespace nmn
