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
#include <optional>
#include <string>
#include <string_view>

#include "nmn/error.hpp"
#include "nmn/ops.hpp"
#include "nmn/parameter_store.hpp"

namespace nmn {

enum class ModuleType { kFind, kTransform, kCombine, kDescribe, kMeasure };

inline constexpr std::array<ModuleType, 5> kAllModuleTypes = {
    ModuleType::kFind, ModuleType::kTransform, ModuleType::kCombine,
    ModuleType::kDescribe, ModuleType::kMeasure};

inline std::string_view type_name(ModuleType t) {
  switch (t) {
    case ModuleType::kFind: return "find";
    case ModuleType::kTransform: return "transform";
    case ModuleType::kCombine: return "combine";
    case ModuleType::kDescribe: return "describe";
    case ModuleType::kMeasure: return "measure";
  }
  return "?";
}

inline std::optional<ModuleType> parse_module_type(std::string_view s) {
  for (ModuleType t : kAllModuleTypes) {
    if (type_name(t) == s) return t;
  }
  return std::nullopt;
}

// [a-z][a-z0-9_-]*
inline bool is_identifier(std::string_view s) {
  if (s.empty() || s[0] < 'a' || s[0] > 'z') return false;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
              c == '-';
    if (!ok) return false;
  }
  return true;
}

// Message kinds flowing along layout edges.
enum class MessageType { kImage, kAttention, kLabel };

inline std::string_view message_name(MessageType m) {
  switch (m) {
    case MessageType::kImage: return "FeatureMap";
    case MessageType::kAttention: return "Attention";
    case MessageType::kLabel: return "Label";
  }
  return "?";
}

// Explicit (non-image) inputs each module type accepts, and what it emits.
inline std::size_t arity(ModuleType t) {
  switch (t) {
    case ModuleType::kFind: return 0;
    case ModuleType::kCombine: return 2;
    default: return 1;
  }
}

inline MessageType output_type(ModuleType t) {
  return t == ModuleType::kDescribe || t == ModuleType::kMeasure
             ? MessageType::kLabel
             : MessageType::kAttention;
}

struct ModuleKey {
  ModuleType type = ModuleType::kFind;
  std::string instance = "unset";

  ModuleKey() = default;
  ModuleKey(ModuleType t, std::string inst) : type(t), instance(std::move(inst)) {
    if (!is_identifier(instance)) {
      throw ContractError("invalid module instance '" + instance + "'");
    }
  }

  // TYPE[INSTANCE]
  std::string str() const {
    return std::string(type_name(type)) + "[" + instance + "]";
  }

  friend bool operator==(const ModuleKey&, const ModuleKey&) = default;
  friend auto operator<=>(const ModuleKey& a, const ModuleKey& b) {
    if (auto c = a.type <=> b.type; c != 0) return c;
    return a.instance <=> b.instance;
  }
};

struct ModuleConfig {
  std::size_t feature_channels = 64;
  std::size_t att_h = 9;
  std::size_t att_w = 9;
  std::size_t transform_hidden = 32;
  std::size_t d_ans = 2;
  // When set, every instance of a type shares one weight set.
  bool share_type_level = false;

  std::size_t att_cells() const { return att_h * att_w; }

  void validate() const {
    if (!feature_channels || !att_h || !att_w || !transform_hidden || !d_ans) {
      throw ContractError("module config sizes must be positive");
    }
  }
};

// type.instance.layer.role
inline std::string param_name(const ModuleKey& key, const ModuleConfig& cfg,
                              std::string_view layer, std::string_view role) {
  std::string inst = cfg.share_type_level ? "shared" : key.instance;
  return std::string(type_name(key.type)) + "." + inst + "." +
         std::string(layer) + "." + std::string(role);
}

template <typename T>
Parameter<T>& module_param(ParameterStore<T>& store, const ModuleKey& key,
                           const ModuleConfig& cfg, std::string_view layer,
                           std::string_view role, const Shape& dims) {
  // Non-negative combine weights start every merge increasing in both
  // inputs. This favors, but does not force, "high means attended":
  // negating every find map and measure is an equally good solution.
  const Init init = key.type == ModuleType::kCombine && role == "weight"
                        ? Init::kGlorotMagnitude
                        : default_init(role);
  return store.get_or_create(param_name(key, cfg, layer, role), dims, init);
}

// Parameter shapes for one module instance, keyed by (layer, role).
struct ParamSpec {
  std::string layer;
  std::string role;
  Shape dims;
};

inline std::vector<ParamSpec> module_param_specs(ModuleType t,
                                                 const ModuleConfig& cfg) {
  const std::size_t C = cfg.feature_channels, n = cfg.att_cells(),
                    h = cfg.transform_hidden, d = cfg.d_ans;
  switch (t) {
    case ModuleType::kFind:
      return {{"conv", "weight", {1, 1, C, 1}}, {"conv", "bias", {1}}};
    case ModuleType::kTransform:
      return {{"fc1", "weight", {n, h}},
              {"fc1", "bias", {h}},
              {"fc2", "weight", {h, n}},
              {"fc2", "bias", {n}}};
    case ModuleType::kCombine:
      return {{"conv", "weight", {1, 1, 2, 1}}, {"conv", "bias", {1}}};
    case ModuleType::kDescribe:
      return {{"fc", "weight", {C, d}}, {"fc", "bias", {d}}};
    case ModuleType::kMeasure:
      return {{"fc", "weight", {n, d}}, {"fc", "bias", {d}}};
  }
  return {};
}

// Creates (or fetches) every parameter of one instance.
template <typename T>
void ensure_module_params(ParameterStore<T>& store, const ModuleKey& key,
                          const ModuleConfig& cfg) {
  for (const auto& s : module_param_specs(key.type, cfg)) {
    module_param(store, key, cfg, s.layer, s.role, s.dims);
  }
}

namespace detail {

template <typename T>
void require_attention(const Var<T>& att, const ModuleConfig& cfg,
                       const char* who) {
  if (att.value().rank() != 2 || att.value().dim(0) != cfg.att_h ||
      att.value().dim(1) != cfg.att_w) {
    throw ShapeError(std::string(who) + ": attention dims " +
                     to_string(att.dims()) + " vs configured [" +
                     std::to_string(cfg.att_h) + "x" +
                     std::to_string(cfg.att_w) + "]");
  }
}

template <typename T>
void require_features(const Var<T>& f, const ModuleConfig& cfg,
                      const char* who) {
  const Shape want{cfg.att_h, cfg.att_w, cfg.feature_channels};
  if (f.dims() != want) {
    throw ShapeError(std::string(who) + ": feature dims " + to_string(f.dims()) +
                     " vs configured " + to_string(want));
  }
}

}  // namespace detail

// find[c]: 1x1 convolution of the feature map with a per-instance weight
// vector; the result is an unnormalized heatmap.
template <typename T>
Var<T> find_forward(Tape<T>& tape, ParameterStore<T>& store,
                    const ModuleConfig& cfg, const std::string& instance,
                    Var<T> features) {
  detail::require_features(features, cfg, "find");
  const ModuleKey key(ModuleType::kFind, instance);
  auto& w = module_param(store, key, cfg, "conv", "weight",
                         {1, 1, cfg.feature_channels, 1});
  auto& b = module_param(store, key, cfg, "conv", "bias", {1});
  auto out = conv2d(features, tape.param(w), tape.param(b), Padding::kSame);
  return reshape(out, {cfg.att_h, cfg.att_w});
}

// transform[c]: flatten -> FC(n -> 32) -> relu -> FC(32 -> n) -> reshape.
template <typename T>
Var<T> transform_forward(Tape<T>& tape, ParameterStore<T>& store,
                         const ModuleConfig& cfg, const std::string& instance,
                         Var<T> attention) {
  detail::require_attention(attention, cfg, "transform");
  const ModuleKey key(ModuleType::kTransform, instance);
  const std::size_t n = cfg.att_cells(), h = cfg.transform_hidden;
  auto& w1 = module_param(store, key, cfg, "fc1", "weight", {n, h});
  auto& b1 = module_param(store, key, cfg, "fc1", "bias", {h});
  auto& w2 = module_param(store, key, cfg, "fc2", "weight", {h, n});
  auto& b2 = module_param(store, key, cfg, "fc2", "bias", {n});
  auto x = reshape(attention, {n});
  auto hidden = relu(fully_connected(x, tape.param(w1), tape.param(b1)));
  auto y = fully_connected(hidden, tape.param(w2), tape.param(b2));
  return reshape(y, {cfg.att_h, cfg.att_w});
}

// combine[c]: relu(1x1 conv over the 2-channel stack of a and b).
template <typename T>
Var<T> combine_forward(Tape<T>& tape, ParameterStore<T>& store,
                       const ModuleConfig& cfg, const std::string& instance,
                       Var<T> a, Var<T> b) {
  detail::require_attention(a, cfg, "combine");
  detail::require_attention(b, cfg, "combine");
  const ModuleKey key(ModuleType::kCombine, instance);
  auto& w = module_param(store, key, cfg, "conv", "weight", {1, 1, 2, 1});
  auto& bias = module_param(store, key, cfg, "conv", "bias", {1});
  auto conv = conv2d(stack_channels(a, b), tape.param(w), tape.param(bias),
                     Padding::kSame);
  return relu(reshape(conv, {cfg.att_h, cfg.att_w}));
}

// describe[c]: attention-weighted feature average -> FC(C -> d_ans).
template <typename T>
Var<T> describe_forward(Tape<T>& tape, ParameterStore<T>& store,
                        const ModuleConfig& cfg, const std::string& instance,
                        Var<T> features, Var<T> attention) {
  detail::require_features(features, cfg, "describe");
  detail::require_attention(attention, cfg, "describe");
  const ModuleKey key(ModuleType::kDescribe, instance);
  auto& w = module_param(store, key, cfg, "fc", "weight",
                         {cfg.feature_channels, cfg.d_ans});
  auto& b = module_param(store, key, cfg, "fc", "bias", {cfg.d_ans});
  auto pooled = attention_weighted_pool(features, attention);
  return fully_connected(pooled, tape.param(w), tape.param(b));
}

// measure[c]: FC over the flattened attention -> d_ans.
template <typename T>
Var<T> measure_forward(Tape<T>& tape, ParameterStore<T>& store,
                       const ModuleConfig& cfg, const std::string& instance,
                       Var<T> attention) {
  detail::require_attention(attention, cfg, "measure");
  const ModuleKey key(ModuleType::kMeasure, instance);
  const std::size_t n = cfg.att_cells();
  auto& w = module_param(store, key, cfg, "fc", "weight", {n, cfg.d_ans});
  auto& b = module_param(store, key, cfg, "fc", "bias", {cfg.d_ans});
  return fully_connected(reshape(attention, {n}), tape.param(w), tape.param(b));
}

}  // namespace nmn
