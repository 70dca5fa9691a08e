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

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/modules.hpp"

namespace nmn {

// Rooted tree of (head, children) terms, e.g. is(red, above(circle)).
struct SymbolicQuery {
  std::string head;
  std::vector<SymbolicQuery> children;

  SymbolicQuery() = default;
  explicit SymbolicQuery(std::string h, std::vector<SymbolicQuery> c = {})
      : head(std::move(h)), children(std::move(c)) {}

  bool is_leaf() const { return children.empty(); }

  // Canonical text: head(child1,child2) with no whitespace.
  std::string str() const {
    std::string out = head;
    if (!children.empty()) {
      out += '(';
      for (std::size_t i = 0; i < children.size(); ++i) {
        if (i) out += ',';
        out += children[i].str();
      }
      out += ')';
    }
    return out;
  }

  friend bool operator==(const SymbolicQuery&, const SymbolicQuery&) = default;
};

namespace detail {

// Recursive-descent reader shared by the query and module-expression
// grammars. Whitespace is insignificant between tokens.
class TermReader {
 public:
  explicit TermReader(std::string_view text) : text_(text) {}

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) {
      throw ParseError(std::string("expected '") + c + "'" + found(), pos_);
    }
    ++pos_;
  }

  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
                c == '-';
      if (!ok) break;
      ++pos_;
    }
    std::string id(text_.substr(start, pos_ - start));
    if (id.empty()) throw ParseError("empty head" + found(), start);
    if (!is_identifier(id)) {
      throw ParseError("invalid identifier '" + id + "'", start);
    }
    return id;
  }

  std::size_t pos() const { return pos_; }

  std::string found() const {
    if (pos_ >= text_.size()) return ", found end of input";
    return std::string(", found '") + text_[pos_] + "'";
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

inline SymbolicQuery read_query(TermReader& r, std::size_t depth) {
  if (depth > 64) throw ParseError("query nested too deeply", r.pos());
  SymbolicQuery q(r.identifier());
  if (r.peek('(')) {
    r.expect('(');
    q.children.push_back(read_query(r, depth + 1));
    while (r.peek(',')) {
      r.expect(',');
      q.children.push_back(read_query(r, depth + 1));
    }
    r.expect(')');
  }
  return q;
}

}  // namespace detail

// Parses `head(arg, ...)` terms. Errors carry the byte offset.
inline SymbolicQuery parse_query(std::string_view text) {
  detail::TermReader r(text);
  if (r.at_end()) throw ParseError("empty query", r.pos());
  SymbolicQuery q = detail::read_query(r, 0);
  if (!r.at_end()) throw ParseError("trailing tokens" + r.found(), r.pos());
  return q;
}

}  // namespace nmn
