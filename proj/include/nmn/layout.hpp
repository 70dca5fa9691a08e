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
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/modules.hpp"
#include "nmn/query.hpp"

namespace nmn {

struct LayoutNode {
  ModuleKey key;
  std::vector<LayoutNode> inputs;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& c : inputs) n += c.size();
    return n;
  }

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& c : inputs) d = std::max(d, c.depth());
    return d + 1;
  }

  // TYPE[INSTANCE](child, ...); with `with_instances` false the instance
  // labels are dropped, leaving only the wiring shape.
  void render(std::string& out, bool with_instances) const {
    out += type_name(key.type);
    if (with_instances) out += "[" + key.instance + "]";
    if (!inputs.empty()) {
      out += '(';
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (i) out += ',';
        inputs[i].render(out, with_instances);
      }
      out += ')';
    }
  }

  friend bool operator==(const LayoutNode&, const LayoutNode&) = default;
};

// The compiled network blueprint: a tree of module instances.
struct Layout {
  LayoutNode root;

  std::size_t size() const { return root.size(); }
  std::size_t depth() const { return root.depth(); }

  std::string str() const {
    std::string s;
    root.render(s, true);
    return s;
  }

  // Structure with instance labels erased.
  std::string shape() const {
    std::string s;
    root.render(s, false);
    return s;
  }

  // Nodes in post-order (children before parents, left to right). This is
  // the evaluation order and the numbering used by attention dumps.
  std::vector<const LayoutNode*> post_order() const {
    std::vector<const LayoutNode*> out;
    std::function<void(const LayoutNode&)> walk = [&](const LayoutNode& n) {
      for (const auto& c : n.inputs) walk(c);
      out.push_back(&n);
    };
    walk(root);
    return out;
  }

  friend bool operator==(const Layout&, const Layout&) = default;
};

enum class Domain { kShapes, kVqa };

namespace detail {

inline LayoutNode read_module_expr(TermReader& r, std::size_t depth) {
  if (depth > 64) throw ParseError("expression nested too deeply", r.pos());
  const std::size_t at = r.pos();
  std::string type = r.identifier();
  auto t = parse_module_type(type);
  if (!t) throw ParseError("unknown module type '" + type + "'", at);
  r.expect('[');
  std::string inst = r.identifier();
  r.expect(']');
  LayoutNode node{ModuleKey(*t, inst), {}};
  if (r.peek('(')) {
    r.expect('(');
    node.inputs.push_back(read_module_expr(r, depth + 1));
    while (r.peek(',')) {
      r.expect(',');
      node.inputs.push_back(read_module_expr(r, depth + 1));
    }
    r.expect(')');
  }
  return node;
}

}  // namespace detail

// Parses the TYPE[INSTANCE](ARG, ...) surface syntax directly into a
// layout. Wiring is not type-checked here; assemble() does that.
inline Layout parse_module_expression(std::string_view text) {
  detail::TermReader r(text);
  if (r.at_end()) throw ParseError("empty expression", r.pos());
  Layout layout{detail::read_module_expr(r, 0)};
  if (!r.at_end()) throw ParseError("trailing tokens" + r.found(), r.pos());
  return layout;
}

namespace detail {

inline LayoutNode inner_node(const SymbolicQuery& q) {
  switch (q.children.size()) {
    case 0:
      return {ModuleKey(ModuleType::kFind, q.head), {}};
    case 1:
      return {ModuleKey(ModuleType::kTransform, q.head),
              {inner_node(q.children[0])}};
    case 2:
      return {ModuleKey(ModuleType::kCombine, q.head),
              {inner_node(q.children[0]), inner_node(q.children[1])}};
    default:
      throw ContractError("unsupported arity " +
                          std::to_string(q.children.size()) + " at '" +
                          q.head + "'");
  }
}

}  // namespace detail

// Leaves become find, arity-1 internal nodes transform, arity-2 internal
// nodes combine; the root becomes measure (shapes) or describe (vqa). A
// two-argument root has its arguments merged by combine[and] first.
inline Layout layout_from_query(const SymbolicQuery& q, Domain domain) {
  if (q.head.empty()) throw ParseError("empty query", 0);
  const ModuleType root_type =
      domain == Domain::kShapes ? ModuleType::kMeasure : ModuleType::kDescribe;
  LayoutNode root{ModuleKey(root_type, q.head), {}};
  switch (q.children.size()) {
    case 0:
      throw ContractError("query root '" + q.head + "' has no arguments");
    case 1:
      root.inputs.push_back(detail::inner_node(q.children[0]));
      break;
    case 2:
      root.inputs.push_back({ModuleKey(ModuleType::kCombine, "and"),
                             {detail::inner_node(q.children[0]),
                              detail::inner_node(q.children[1])}});
      break;
    default:
      throw ContractError("unsupported arity " +
                          std::to_string(q.children.size()) + " at root '" +
                          q.head + "'");
  }
  return Layout{std::move(root)};
}

struct GroupOptions {
  // Group layouts that are identical up to instance labels; otherwise only
  // exactly identical layouts share a batch.
  bool batch_by_shape = true;
  std::size_t max_batch = 64;
};

// Partitions example indices into batches of compatible layouts. Groups
// appear in order of first occurrence; input order is kept within a group.
inline std::vector<std::vector<std::size_t>> group_by_layout(
    const std::vector<Layout>& layouts, const GroupOptions& opts = {}) {
  if (opts.max_batch == 0) throw ContractError("max_batch must be positive");
  std::map<std::string, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    std::string key = opts.batch_by_shape ? layouts[i].shape() : layouts[i].str();
    auto [it, inserted] = group_of.emplace(key, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (const auto& g : groups) {
    for (std::size_t s = 0; s < g.size(); s += opts.max_batch) {
      const std::size_t e = std::min(g.size(), s + opts.max_batch);
      batches.emplace_back(g.begin() + s, g.begin() + e);
    }
  }
  return batches;
}

struct LayoutStats {
  std::set<ModuleType> types;
  std::size_t instances = 0;
  std::size_t layouts = 0;
  std::size_t max_depth = 0;
  std::size_t max_size = 0;

  // Header plus one row, Table-1 style.
  std::string tsv() const {
    std::ostringstream os;
    os << "types\tinstances\tlayouts\tmax_depth\tmax_size\n";
    bool first = true;
    for (ModuleType t : types) {
      if (!first) os << ',';
      os << type_name(t);
      first = false;
    }
    os << '\t' << instances << '\t' << layouts << '\t' << max_depth << '\t'
       << max_size << '\n';
    return os.str();
  }
};

inline LayoutStats corpus_stats(const std::vector<Layout>& layouts) {
  if (layouts.empty()) throw ContractError("corpus_stats of empty corpus");
  LayoutStats s;
  std::set<ModuleKey> keys;
  std::set<std::string> distinct;
  for (const auto& l : layouts) {
    for (const LayoutNode* n : l.post_order()) {
      s.types.insert(n->key.type);
      keys.insert(n->key);
    }
    distinct.insert(l.str());
    s.max_depth = std::max(s.max_depth, l.depth());
    s.max_size = std::max(s.max_size, l.size());
  }
  s.instances = keys.size();
  s.layouts = distinct.size();
  return s;
}

}  // namespace nmn
