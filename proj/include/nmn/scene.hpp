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

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/image_io.hpp"
#include "nmn/query.hpp"

namespace nmn {

enum class Color : std::uint8_t { kRed, kGreen, kBlue };
enum class Glyph : std::uint8_t { kCircle, kSquare, kTriangle };

inline constexpr std::array<std::string_view, 3> kColorNames = {"red", "green",
                                                                "blue"};
inline constexpr std::array<std::string_view, 3> kGlyphNames = {
    "circle", "square", "triangle"};
inline constexpr std::array<std::string_view, 5> kRelationNames = {
    "above", "below", "left_of", "right_of", "next-to"};

inline std::optional<Color> parse_color(std::string_view s) {
  for (std::size_t i = 0; i < kColorNames.size(); ++i)
    if (kColorNames[i] == s) return static_cast<Color>(i);
  return std::nullopt;
}

inline std::optional<Glyph> parse_glyph(std::string_view s) {
  for (std::size_t i = 0; i < kGlyphNames.size(); ++i)
    if (kGlyphNames[i] == s) return static_cast<Glyph>(i);
  return std::nullopt;
}

inline bool is_relation(std::string_view s) {
  for (auto r : kRelationNames)
    if (r == s) return true;
  return false;
}

struct SceneObject {
  Glyph glyph;
  Color color;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

// Square grid of cells, each empty or holding one colored glyph.
struct Scene {
  std::size_t grid = 3;
  std::vector<std::optional<SceneObject>> cells;

  Scene() : cells(9) {}
  explicit Scene(std::size_t g) : grid(g), cells(g * g) {
    if (g == 0 || g > 8) throw ContractError("grid must be in [1, 8]");
  }

  std::optional<SceneObject>& at(std::size_t row, std::size_t col) {
    return cells[row * grid + col];
  }
  const std::optional<SceneObject>& at(std::size_t row, std::size_t col) const {
    return cells[row * grid + col];
  }

  std::size_t occupied() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.has_value();
    return n;
  }

  // Row-major tokens joined by ',': color letter + glyph letter, `_` empty.
  std::string serialize() const {
    static constexpr char kColorChar[] = {'r', 'g', 'b'};
    static constexpr char kGlyphChar[] = {'c', 's', 't'};
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      if (!cells[i]) {
        out += '_';
      } else {
        out += kColorChar[static_cast<int>(cells[i]->color)];
        out += kGlyphChar[static_cast<int>(cells[i]->glyph)];
      }
    }
    return out;
  }

  static Scene deserialize(std::string_view text) {
    std::vector<std::string_view> tokens;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (i == text.size() || text[i] == ',') {
        tokens.push_back(text.substr(start, i - start));
        start = i + 1;
      }
    }
    std::size_t g = 1;
    while (g * g < tokens.size()) ++g;
    if (g * g != tokens.size() || g > 8) {
      throw DataError("scene has " + std::to_string(tokens.size()) +
                      " cells, not a square grid");
    }
    Scene s(g);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto t = tokens[i];
      if (t == "_") continue;
      if (t.size() != 2) throw DataError("bad scene token '" + std::string(t) + "'");
      SceneObject o{};
      switch (t[0]) {
        case 'r': o.color = Color::kRed; break;
        case 'g': o.color = Color::kGreen; break;
        case 'b': o.color = Color::kBlue; break;
        default: throw DataError("bad color in scene token '" + std::string(t) + "'");
      }
      switch (t[1]) {
        case 'c': o.glyph = Glyph::kCircle; break;
        case 's': o.glyph = Glyph::kSquare; break;
        case 't': o.glyph = Glyph::kTriangle; break;
        default: throw DataError("bad glyph in scene token '" + std::string(t) + "'");
      }
      s.cells[i] = o;
    }
    return s;
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct SceneConfig {
  std::size_t grid = 3;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 6;
};

// Occupancy uniform in [min, max], cells without replacement, glyph and
// color i.i.d. uniform.
template <typename Rng>
Scene sample_scene(Rng& rng, const SceneConfig& cfg = {}) {
  const std::size_t n = cfg.grid * cfg.grid;
  if (cfg.min_shapes > cfg.max_shapes || cfg.max_shapes > n) {
    throw ContractError("invalid shape-count bounds");
  }
  Scene s(cfg.grid);
  std::uniform_int_distribution<std::size_t> count(cfg.min_shapes, cfg.max_shapes);
  std::uniform_int_distribution<int> three(0, 2);
  const std::size_t k = count(rng);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Partial Fisher-Yates; picks k distinct cells.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    SceneObject o{static_cast<Glyph>(three(rng)), static_cast<Color>(three(rng))};
    s.cells[order[i]] = o;
  }
  return s;
}

using CellSet = std::uint64_t;

namespace detail {

inline CellSet relate(const Scene& s, std::string_view rel, CellSet from) {
  const std::size_t g = s.grid;
  CellSet out = 0;
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      bool hit = false;
      for (std::size_t r2 = 0; r2 < g && !hit; ++r2) {
        for (std::size_t c2 = 0; c2 < g && !hit; ++c2) {
          if (!(from >> (r2 * g + c2) & 1)) continue;
          if (rel == "above") {
            hit = c == c2 && r < r2;
          } else if (rel == "below") {
            hit = c == c2 && r > r2;
          } else if (rel == "left_of") {
            hit = r == r2 && c < c2;
          } else if (rel == "right_of") {
            hit = r == r2 && c > c2;
          } else {  // next-to: 4-adjacent
            hit = (r == r2 && (c + 1 == c2 || c2 + 1 == c)) ||
                  (c == c2 && (r + 1 == r2 || r2 + 1 == r));
          }
        }
      }
      if (hit) out |= CellSet{1} << (r * g + c);
    }
  }
  return out;
}

inline CellSet denote(const Scene& s, const SymbolicQuery& q) {
  if (q.is_leaf()) {
    auto color = parse_color(q.head);
    auto glyph = parse_glyph(q.head);
    if (!color && !glyph) throw DataError("unknown leaf '" + q.head + "'");
    CellSet out = 0;
    for (std::size_t i = 0; i < s.cells.size(); ++i) {
      const auto& c = s.cells[i];
      if (!c) continue;
      if ((color && c->color == *color) || (glyph && c->glyph == *glyph))
        out |= CellSet{1} << i;
    }
    return out;
  }
  if (q.head == "and" && q.children.size() == 2) {
    return denote(s, q.children[0]) & denote(s, q.children[1]);
  }
  if (is_relation(q.head) && q.children.size() == 1) {
    return relate(s, q.head, denote(s, q.children[0]));
  }
  throw DataError("unknown head '" + q.head + "' with " +
                  std::to_string(q.children.size()) + " argument(s)");
}

}  // namespace detail

// Set-theoretic ground truth. Leaves denote matching occupied cells, and
// intersects, relations map a set to the cells standing in that relation to
// some member, and is(A[, B]) asks whether (A [∩ B]) is non-empty.
inline std::string oracle_answer(const Scene& scene, const SymbolicQuery& q) {
  if (q.head != "is" || q.children.empty() || q.children.size() > 2) {
    throw DataError("unknown root '" + q.head + "' with " +
                    std::to_string(q.children.size()) + " argument(s)");
  }
  CellSet set = detail::denote(scene, q.children[0]);
  if (q.children.size() == 2) set &= detail::denote(scene, q.children[1]);
  return set != 0 ? "yes" : "no";
}

// Glyph raster inside a 10 x 10 cell: square 8x8 block, disc of radius 4,
// upward triangle with an 8-pixel base. Pure channel colors, black
// background.
inline constexpr std::size_t kCellPx = 10;

inline bool glyph_covers(Glyph g, std::size_t lx, std::size_t ly) {
  const double cx = lx + 0.5, cy = ly + 0.5;
  switch (g) {
    case Glyph::kSquare:
      return lx >= 1 && lx <= 8 && ly >= 1 && ly <= 8;
    case Glyph::kCircle:
      return (cx - 5.0) * (cx - 5.0) + (cy - 5.0) * (cy - 5.0) <= 16.0;
    case Glyph::kTriangle: {
      if (ly < 1 || ly > 8) return false;
      const double half = static_cast<double>(ly) / 2.0;  // row k = ly-1
      return std::abs(cx - 5.0) <= half;
    }
  }
  return false;
}

inline Image render(const Scene& s) {
  const std::size_t px = s.grid * kCellPx;
  Image img(px, px, 3);
  for (std::size_t r = 0; r < s.grid; ++r) {
    for (std::size_t c = 0; c < s.grid; ++c) {
      const auto& o = s.at(r, c);
      if (!o) continue;
      std::uint8_t rgb[3] = {0, 0, 0};
      rgb[static_cast<int>(o->color)] = 255;
      for (std::size_t ly = 0; ly < kCellPx; ++ly) {
        for (std::size_t lx = 0; lx < kCellPx; ++lx) {
          if (!glyph_covers(o->glyph, lx, ly)) continue;
          auto* p = img.px(c * kCellPx + lx, r * kCellPx + ly);
          p[0] = rgb[0];
          p[1] = rgb[1];
          p[2] = rgb[2];
        }
      }
    }
  }
  return img;
}

}  // namespace nmn
