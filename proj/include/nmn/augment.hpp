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
#include <array>
#include <random>
#include <string>

#include "nmn/query.hpp"
#include "nmn/scene.hpp"

namespace nmn {

// An answer-preserving relabeling of a SHAPES scene: a permutation of the
// colors composed with an element of the grid's dihedral group. Applying
// the same symmetry to a scene and to a query leaves the oracle answer
// unchanged.
struct SceneSymmetry {
  std::array<Color, 3> color_map = {Color::kRed, Color::kGreen, Color::kBlue};
  bool transpose = false;  // applied first
  bool flip_rows = false;
  bool flip_cols = false;

  bool is_identity() const {
    return !transpose && !flip_rows && !flip_cols && color_map[0] == Color::kRed &&
           color_map[1] == Color::kGreen && color_map[2] == Color::kBlue;
  }
};

template <typename Rng>
SceneSymmetry random_symmetry(Rng& rng) {
  SceneSymmetry s;
  std::array<int, 3> perm = {0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < 3; ++i) s.color_map[i] = static_cast<Color>(perm[i]);
  std::uniform_int_distribution<int> bit(0, 1);
  s.transpose = bit(rng);
  s.flip_rows = bit(rng);
  s.flip_cols = bit(rng);
  return s;
}

inline Scene apply(const SceneSymmetry& sym, const Scene& scene) {
  const std::size_t g = scene.grid;
  Scene out(g);
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      auto o = scene.at(r, c);
      if (!o) continue;
      o->color = sym.color_map[static_cast<std::size_t>(o->color)];
      std::size_t r2 = sym.transpose ? c : r, c2 = sym.transpose ? r : c;
      if (sym.flip_rows) r2 = g - 1 - r2;
      if (sym.flip_cols) c2 = g - 1 - c2;
      out.at(r2, c2) = o;
    }
  }
  return out;
}

inline std::string apply(const SceneSymmetry& sym, const std::string& word) {
  if (auto c = parse_color(word)) {
    return std::string(kColorNames[static_cast<std::size_t>(
        sym.color_map[static_cast<std::size_t>(*c)])]);
  }
  std::string w = word;
  if (sym.transpose) {
    if (w == "above") w = "left_of";
    else if (w == "left_of") w = "above";
    else if (w == "below") w = "right_of";
    else if (w == "right_of") w = "below";
  }
  if (sym.flip_rows) {
    if (w == "above") w = "below";
    else if (w == "below") w = "above";
  }
  if (sym.flip_cols) {
    if (w == "left_of") w = "right_of";
    else if (w == "right_of") w = "left_of";
  }
  return w;
}

inline SymbolicQuery apply(const SceneSymmetry& sym, const SymbolicQuery& q) {
  SymbolicQuery out(apply(sym, q.head));
  for (const auto& c : q.children) out.children.push_back(apply(sym, c));
  return out;
}

}  // namespace nmn
