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

#include <functional>
#include <string>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/layout.hpp"
#include "nmn/modules.hpp"

namespace nmn {

enum class ParamPolicy {
  kCreateMissing,  // training: instantiate unseen instances lazily
  kRequireExisting,  // inference from a checkpoint
};

// An executable network assembled from a layout. Evaluation wires module
// forwards in post-order; all parameters live in the shared store.
template <typename T>
class Network {
 public:
  // Receives (post-order index, node, output) for every evaluated node.
  using Observer =
      std::function<void(std::size_t, const LayoutNode&, const Var<T>&)>;

  Network(Layout layout, ParameterStore<T>& store, ModuleConfig cfg,
          ParamPolicy policy = ParamPolicy::kCreateMissing)
      : layout_(std::move(layout)), store_(&store), cfg_(cfg) {
    cfg_.validate();
    if (output_type(layout_.root.key.type) != MessageType::kLabel) {
      throw AssemblyError("root " + layout_.root.key.str() +
                          " produces " +
                          std::string(message_name(
                              output_type(layout_.root.key.type))) +
                          ", a network must end in a Label");
    }
    check(layout_.root);
    for (const LayoutNode* n : layout_.post_order()) {
      if (policy == ParamPolicy::kCreateMissing) {
        ensure_module_params(store, n->key, cfg_);
      } else {
        for (const auto& s : module_param_specs(n->key.type, cfg_)) {
          const auto name = param_name(n->key, cfg_, s.layer, s.role);
          if (!store.contains(name)) {
            throw DataError("module " + n->key.str() +
                            " has no trained parameters (" + name + ")");
          }
        }
      }
    }
  }

  const Layout& layout() const { return layout_; }
  const ModuleConfig& config() const { return cfg_; }

  // FeatureMap -> answer representation of length d_ans.
  Var<T> operator()(Tape<T>& tape, Var<T> features,
                    const Observer& observe = {}) const {
    std::size_t counter = 0;
    return eval(tape, layout_.root, features, observe, counter);
  }

 private:
  static void check(const LayoutNode& node) {
    const ModuleType t = node.key.type;
    if (t == ModuleType::kFind && !node.inputs.empty()) {
      const auto& child = node.inputs[0];
      throw AssemblyError(
          "edge " + child.key.str() + " -> " + node.key.str() + ": " +
          std::string(message_name(output_type(child.key.type))) +
          " wired into a slot expecting FeatureMap (find reads the image)");
    }
    if (node.inputs.size() != arity(t)) {
      throw AssemblyError(node.key.str() + " takes " +
                          std::to_string(arity(t)) + " input(s), got " +
                          std::to_string(node.inputs.size()));
    }
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const auto& child = node.inputs[i];
      const MessageType got = output_type(child.key.type);
      if (got != MessageType::kAttention) {
        throw AssemblyError("edge " + child.key.str() + " -> " +
                            node.key.str() + " input " + std::to_string(i) +
                            ": " + std::string(message_name(got)) +
                            " wired into a slot expecting Attention");
      }
      check(child);
    }
  }

  Var<T> eval(Tape<T>& tape, const LayoutNode& node, Var<T> features,
              const Observer& observe, std::size_t& counter) const {
    std::vector<Var<T>> args;
    for (const auto& c : node.inputs)
      args.push_back(eval(tape, c, features, observe, counter));
    auto& store = *store_;
    const auto& inst = node.key.instance;
    Var<T> out;
    switch (node.key.type) {
      case ModuleType::kFind:
        out = find_forward(tape, store, cfg_, inst, features);
        break;
      case ModuleType::kTransform:
        out = transform_forward(tape, store, cfg_, inst, args[0]);
        break;
      case ModuleType::kCombine:
        out = combine_forward(tape, store, cfg_, inst, args[0], args[1]);
        break;
      case ModuleType::kDescribe:
        out = describe_forward(tape, store, cfg_, inst, features, args[0]);
        break;
      case ModuleType::kMeasure:
        out = measure_forward(tape, store, cfg_, inst, args[0]);
        break;
    }
    if (observe) observe(counter, node, out);
    ++counter;
    return out;
  }

  Layout layout_;
  ParameterStore<T>* store_;
  ModuleConfig cfg_;
};

template <typename T>
Network<T> assemble(const Layout& layout, ParameterStore<T>& store,
                    const ModuleConfig& cfg,
                    ParamPolicy policy = ParamPolicy::kCreateMissing) {
  return Network<T>(layout, store, cfg, policy);
}

}  // namespace nmn
