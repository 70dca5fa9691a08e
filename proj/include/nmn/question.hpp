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
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/layout.hpp"
#include "nmn/query.hpp"
#include "nmn/scene.hpp"

// Closed template grammar for SHAPES questions.
//
//   Q      -> "is" NP ATTR                  is(NP, ATTR), ATTR of the other category
//           | "is there" NP CHAIN           is(NP, CHAIN)
//           | "is there a shape" CHAIN      is(CHAIN)
//   NP     -> "a" COLOR "shape" | "a" GLYPH | "a" COLOR GLYPH
//   ATTR   -> COLOR | "a" GLYPH
//   CHAIN  -> REL NP | REL "a shape" CHAIN  rel(NP) | rel(CHAIN)
//
// "a COLOR GLYPH" denotes and(COLOR, GLYPH). Function words (articles,
// "there", "shape") are dropped before parsing.
namespace nmn {

namespace detail {

inline std::string relation_surface(std::string_view rel) {
  if (rel == "left_of") return "left of";
  if (rel == "right_of") return "right of";
  if (rel == "next-to") return "next to";
  return std::string(rel);
}

inline bool is_color_word(std::string_view w) { return parse_color(w).has_value(); }
inline bool is_glyph_word(std::string_view w) { return parse_glyph(w).has_value(); }

// Noun phrase surface for a leaf or and(color, glyph).
inline std::string np_surface(const SymbolicQuery& np) {
  if (np.head == "and" && np.children.size() == 2) {
    return "a " + np.children[0].head + " " + np.children[1].head;
  }
  if (np.is_leaf() && is_color_word(np.head)) return "a " + np.head + " shape";
  if (np.is_leaf() && is_glyph_word(np.head)) return "a " + np.head;
  throw ContractError("not a noun phrase: " + np.str());
}

inline std::string chain_surface(const SymbolicQuery& chain) {
  if (chain.children.size() != 1 || !is_relation(chain.head)) {
    throw ContractError("not a relation chain: " + chain.str());
  }
  const auto& target = chain.children[0];
  std::string out = relation_surface(chain.head) + " ";
  if (target.children.size() == 1 && is_relation(target.head)) {
    return out + "a shape " + chain_surface(target);
  }
  return out + np_surface(target);
}

inline std::string attr_surface(const SymbolicQuery& attr) {
  if (attr.is_leaf() && is_color_word(attr.head)) return attr.head;
  if (attr.is_leaf() && is_glyph_word(attr.head)) return "a " + attr.head;
  throw ContractError("not an attribute: " + attr.str());
}

}  // namespace detail

// English question for a grammar-shaped query.
inline std::string realize_question(const SymbolicQuery& q) {
  if (q.head != "is" || q.children.empty() || q.children.size() > 2) {
    throw ContractError("not a SHAPES query: " + q.str());
  }
  if (q.children.size() == 1) {
    return "is there a shape " + detail::chain_surface(q.children[0]) + "?";
  }
  const auto& second = q.children[1];
  if (second.children.size() == 1 && is_relation(second.head)) {
    return "is there " + detail::np_surface(q.children[0]) + " " +
           detail::chain_surface(second) + "?";
  }
  return "is " + detail::np_surface(q.children[0]) + " " +
         detail::attr_surface(second) + "?";
}

// Lower-cased word tokens with '?' removed (the LSTM's view of a question).
inline std::vector<std::string> tokenize_question(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (c == '?' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace detail {

struct Token {
  std::string word;
  std::size_t offset;
};

// Lemmatized content tokens: function words dropped, plurals folded,
// two-word relations merged.
inline std::vector<Token> content_tokens(std::string_view text) {
  std::vector<Token> raw;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() &&
           (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == '?'))
      ++i;
    if (i >= text.size()) break;
    const std::size_t start = i;
    std::string w;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
           text[i] != '?') {
      w += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
      ++i;
    }
    raw.push_back({w, start});
  }
  static const std::set<std::string> kPlurals = {"circles", "squares",
                                                 "triangles", "shapes"};
  static const std::set<std::string> kFunction = {"a", "an", "the", "there",
                                                  "shape", "any", "some"};
  std::vector<Token> out;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    Token t = raw[k];
    if (kPlurals.count(t.word)) t.word.pop_back();
    if (k + 1 < raw.size() && raw[k + 1].word == "of" &&
        (t.word == "left" || t.word == "right")) {
      t.word += "_of";
      ++k;
    } else if (k + 1 < raw.size() && raw[k + 1].word == "to" &&
               t.word == "next") {
      t.word = "next-to";
      ++k;
    }
    if (kFunction.count(t.word)) continue;
    out.push_back(std::move(t));
  }
  return out;
}

// Backtracking parser over content tokens; remembers the furthest failure
// for error reporting.
class QuestionParser {
 public:
  QuestionParser(std::vector<Token> tokens, std::size_t text_len)
      : toks_(std::move(tokens)), text_len_(text_len) {}

  SymbolicQuery parse() {
    if (toks_.empty() || toks_[0].word != "is") {
      fail(0, {"is"});
      throw error();
    }
    // is NP ATTR
    for (auto& [np, next] : noun_phrases(1)) {
      if (next < toks_.size() && next + 1 == toks_.size()) {
        const auto& w = toks_[next].word;
        if (is_color_word(w) || is_glyph_word(w)) {
          return SymbolicQuery("is", {np, SymbolicQuery(w)});
        }
      }
      fail(next, {"COLOR", "GLYPH", "RELATION"});
    }
    // is [NP] CHAIN
    for (auto& [np, next] : noun_phrases(1)) {
      if (auto chain = parse_chain(next); chain && chain->second == toks_.size()) {
        return SymbolicQuery("is", {np, chain->first});
      }
    }
    if (auto chain = parse_chain(1); chain && chain->second == toks_.size()) {
      return SymbolicQuery("is", {chain->first});
    }
    throw error();
  }

 private:
  // All noun-phrase readings starting at `i`, longest first.
  std::vector<std::pair<SymbolicQuery, std::size_t>> noun_phrases(std::size_t i) {
    std::vector<std::pair<SymbolicQuery, std::size_t>> out;
    if (i >= toks_.size()) {
      fail(i, {"COLOR", "GLYPH"});
      return out;
    }
    const auto& w = toks_[i].word;
    if (is_color_word(w) && i + 1 < toks_.size() &&
        is_glyph_word(toks_[i + 1].word)) {
      out.push_back({SymbolicQuery("and", {SymbolicQuery(w),
                                           SymbolicQuery(toks_[i + 1].word)}),
                     i + 2});
    }
    if (is_color_word(w) || is_glyph_word(w)) {
      out.push_back({SymbolicQuery(w), i + 1});
    } else {
      fail(i, {"COLOR", "GLYPH"});
    }
    return out;
  }

  std::optional<std::pair<SymbolicQuery, std::size_t>> parse_chain(std::size_t i) {
    if (i >= toks_.size() || !is_relation(toks_[i].word)) {
      fail(i, {"RELATION"});
      return std::nullopt;
    }
    const std::string rel = toks_[i].word;
    if (auto inner = parse_chain(i + 1)) {
      return std::make_pair(SymbolicQuery(rel, {inner->first}), inner->second);
    }
    // Longest noun phrase that ends the input or is followed by nothing.
    for (auto& [np, next] : noun_phrases(i + 1)) {
      if (next == toks_.size()) return std::make_pair(SymbolicQuery(rel, {np}), next);
      fail(next, {"end of question"});
    }
    return std::nullopt;
  }

  void fail(std::size_t tok, std::set<std::string> expected) {
    if (tok > furthest_) {
      furthest_ = tok;
      expected_ = std::move(expected);
    } else if (tok == furthest_) {
      expected_.insert(expected.begin(), expected.end());
    }
  }

  ParseError error() const {
    std::ostringstream os;
    os << "unparseable question; matched [";
    for (std::size_t k = 0; k < furthest_ && k < toks_.size(); ++k) {
      if (k) os << ' ';
      os << toks_[k].word;
    }
    os << "], expected one of {";
    bool first = true;
    for (const auto& e : expected_) {
      if (!first) os << ", ";
      os << e;
      first = false;
    }
    os << '}';
    const std::size_t offset =
        furthest_ < toks_.size() ? toks_[furthest_].offset : text_len_;
    return ParseError(os.str(), offset);
  }

  std::vector<Token> toks_;
  std::size_t text_len_;
  std::size_t furthest_ = 0;
  std::set<std::string> expected_;
};

}  // namespace detail

inline SymbolicQuery parse_question(std::string_view text) {
  detail::QuestionParser p(detail::content_tokens(text), text.size());
  return p.parse();
}

struct QuestionConfig {
  std::size_t count = 244;
  std::size_t min_layout_size = 4;
  std::size_t max_layout_size = 6;
  bool next_to = false;
  std::uint64_t seed = 0;
};

struct QuestionRecord {
  std::string text;
  SymbolicQuery query;
  std::size_t layout_size;
};

struct QuestionSet {
  std::vector<QuestionRecord> questions;
  std::size_t pool_size = 0;  // grammar realizations before subsampling
  std::map<std::size_t, std::size_t> pool_by_size;
};

// Share of each layout size in the selected question set (sizes 4/5/6).
inline const std::map<std::size_t, double>& size_proportions() {
  static const std::map<std::size_t, double> p = {{4, 0.31}, {5, 0.56}, {6, 0.13}};
  return p;
}

namespace detail {

inline std::vector<SymbolicQuery> all_noun_phrases() {
  std::vector<SymbolicQuery> out;
  for (auto c : kColorNames) out.emplace_back(std::string(c));
  for (auto g : kGlyphNames) out.emplace_back(std::string(g));
  for (auto c : kColorNames)
    for (auto g : kGlyphNames)
      out.push_back(SymbolicQuery(
          "and", {SymbolicQuery(std::string(c)), SymbolicQuery(std::string(g))}));
  return out;
}

inline bool same_category(const SymbolicQuery& np, const std::string& word) {
  const bool color = is_color_word(word);
  if (np.is_leaf()) return is_color_word(np.head) == color;
  for (const auto& c : np.children)
    if (same_category(c, word)) return true;
  return false;
}

}  // namespace detail

// Every grammar realization whose compiled layout size lies in
// [min_layout_size, max_layout_size], relation chains up to length 2,
// followed by a seeded subsample stratified by layout size.
inline QuestionSet enumerate_questions(const QuestionConfig& cfg) {
  std::vector<std::string> rels = {"above", "below", "left_of", "right_of"};
  if (cfg.next_to) rels.push_back("next-to");
  const auto nps = detail::all_noun_phrases();
  std::vector<SymbolicQuery> simple;
  for (const auto& np : nps)
    if (np.is_leaf()) simple.push_back(np);

  std::vector<SymbolicQuery> chains;
  for (const auto& r : rels) {
    for (const auto& np : nps) chains.push_back(SymbolicQuery(r, {np}));
    for (const auto& r2 : rels)
      for (const auto& np : nps)
        chains.push_back(SymbolicQuery(r, {SymbolicQuery(r2, {np})}));
  }

  std::vector<SymbolicQuery> candidates;
  for (const auto& np : nps) {
    for (const auto& attr : simple) {
      // An attribute of the category the noun phrase already fixes would
      // make the answer constant.
      if (detail::same_category(np, attr.head)) continue;
      candidates.push_back(SymbolicQuery("is", {np, attr}));
    }
  }
  for (const auto& c : chains) {
    candidates.push_back(SymbolicQuery("is", {c}));
    for (const auto& np : nps) candidates.push_back(SymbolicQuery("is", {np, c}));
  }

  std::map<std::size_t, std::vector<QuestionRecord>> by_size;
  std::set<std::string> seen;
  for (auto& q : candidates) {
    const std::size_t size = layout_from_query(q, Domain::kShapes).size();
    if (size < cfg.min_layout_size || size > cfg.max_layout_size) continue;
    std::string text = realize_question(q);
    if (!seen.insert(text).second) continue;
    by_size[size].push_back({std::move(text), q, size});
  }

  QuestionSet out;
  for (const auto& [size, qs] : by_size) {
    out.pool_size += qs.size();
    out.pool_by_size[size] = qs.size();
  }
  if (out.pool_size < cfg.count) {
    throw ContractError("grammar yields " + std::to_string(out.pool_size) +
                        " questions, " + std::to_string(cfg.count) +
                        " requested");
  }

  // Largest-remainder allocation of the requested count over sizes.
  std::map<std::size_t, double> weight;
  double total = 0;
  for (const auto& [size, qs] : by_size) {
    auto it = size_proportions().find(size);
    weight[size] = it != size_proportions().end() ? it->second : 0.0;
    total += weight[size];
  }
  if (total == 0) {
    for (auto& [size, w] : weight) w = 1.0;
    total = static_cast<double>(weight.size());
  }
  std::map<std::size_t, std::size_t> quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (const auto& [size, w] : weight) {
    const double exact = cfg.count * w / total;
    quota[size] = std::min(static_cast<std::size_t>(exact), by_size[size].size());
    assigned += quota[size];
    remainders.push_back({exact - static_cast<double>(quota[size]), size});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // Hand out the remaining slots; strata that run dry pass theirs on.
  while (assigned < cfg.count) {
    bool progressed = false;
    for (const auto& [rem, size] : remainders) {
      if (assigned == cfg.count) break;
      if (quota[size] < by_size[size].size()) {
        ++quota[size];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }

  std::mt19937_64 rng(cfg.seed ^ 0x5155455354494F4EULL);
  for (auto& [size, qs] : by_size) {
    std::vector<std::size_t> idx(qs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < quota[size]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + quota[size]);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) out.questions.push_back(qs[i]);
  }
  return out;
}

}  // namespace nmn
