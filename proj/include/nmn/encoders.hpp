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

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/image_io.hpp"
#include "nmn/ops.hpp"
#include "nmn/parameter_store.hpp"

namespace nmn {

struct ConvLayerSpec {
  enum class Kind { kConv, kMaxPool };
  Kind kind = Kind::kConv;
  std::size_t kernel = 3;  // conv kernel size or pool window
  std::size_t out_channels = 0;  // conv only
  std::size_t stride = 1;  // pool only
  bool relu = true;  // conv only
};

// LeNet-style convolutional front end. The default maps a 30x30x3 image to
// a 9x9x64 feature map:
//   conv5x5(3->16) same, relu, maxpool 2/2  -> 15x15x16
//   conv3x3(16->64) same, relu, maxpool 7/1 -> 9x9x64
struct ConvStackConfig {
  std::size_t in_channels = 3;
  std::vector<ConvLayerSpec> layers = {
      {ConvLayerSpec::Kind::kConv, 5, 16, 1, true},
      {ConvLayerSpec::Kind::kMaxPool, 2, 0, 2, false},
      {ConvLayerSpec::Kind::kConv, 3, 64, 1, true},
      {ConvLayerSpec::Kind::kMaxPool, 7, 0, 1, false},
  };

  // Output dims for an H x W input.
  Shape output_dims(std::size_t h, std::size_t w) const {
    std::size_t c = in_channels;
    for (const auto& l : layers) {
      if (l.kind == ConvLayerSpec::Kind::kConv) {
        c = l.out_channels;
      } else {
        if (l.kernel > h || l.kernel > w) {
          throw ShapeError("pool window " + std::to_string(l.kernel) +
                           " exceeds map " + std::to_string(h) + "x" +
                           std::to_string(w));
        }
        h = (h - l.kernel) / l.stride + 1;
        w = (w - l.kernel) / l.stride + 1;
      }
    }
    return {h, w, c};
  }

  // Default stack with the final pooling window chosen so the output is
  // exactly `att` x `att` for an `image_px` input.
  static ConvStackConfig for_grid(std::size_t image_px, std::size_t att,
                                  std::size_t channels = 64) {
    ConvStackConfig c;
    c.layers[2].out_channels = channels;
    const std::size_t half = image_px / 2;
    if (att > half) throw ShapeError("attention grid larger than pooled map");
    c.layers[3].kernel = half - att + 1;
    return c;
  }
};

// Pixels scaled to [0, 1], H x W x 3.
template <typename T>
Tensor<T> image_tensor(const Image& img) {
  Tensor<T> t({img.height, img.width, img.channels});
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    t[i] = static_cast<T>(img.pixels[i]) / T{255};
  return t;
}

template <typename T>
Var<T> conv_features(Tape<T>& tape, ParameterStore<T>& store,
                     const ConvStackConfig& cfg, Var<T> image) {
  if (image.value().rank() != 3 || image.value().dim(2) != cfg.in_channels) {
    throw ShapeError("conv_features: image dims " + to_string(image.dims()) +
                     ", expected " + std::to_string(cfg.in_channels) +
                     " channels");
  }
  Var<T> x = image;
  std::size_t c = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    if (l.kind == ConvLayerSpec::Kind::kMaxPool) {
      x = max_pool(x, l.kernel, l.stride);
      continue;
    }
    const std::string base = "encoder.lenet.conv" + std::to_string(i);
    auto& w = store.get_or_create(base + ".weight",
                                  {l.kernel, l.kernel, c, l.out_channels},
                                  Init::kGlorotUniform);
    auto& b = store.get_or_create(base + ".bias", {l.out_channels}, Init::kZeros);
    x = conv2d(x, tape.param(w), tape.param(b), Padding::kSame);
    if (l.relu) x = relu(x);
    c = l.out_channels;
  }
  return x;
}

template <typename T>
Var<T> conv_features(Tape<T>& tape, ParameterStore<T>& store,
                     const ConvStackConfig& cfg, const Image& image) {
  return conv_features(tape, store, cfg, tape.constant(image_tensor<T>(image)));
}

// Token -> index map. Index 0 is padding, 1 is out-of-vocabulary.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnknown = 1;

  Vocabulary() {
    add("<pad>");
    add("<unk>");
  }

  std::size_t add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  std::size_t lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnknown : it->second;
  }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    for (const auto& t : tokens) out.push_back(lookup(t));
    return out;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string tsv() const {
    std::string out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      out += tokens_[i] + "\t" + std::to_string(i) + "\n";
    return out;
  }

  static Vocabulary from_tsv(const std::string& text) {
    Vocabulary v;
    v.index_.clear();
    v.tokens_.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("vocabulary line without tab");
      std::size_t idx;
      try {
        idx = std::stoul(line.substr(tab + 1));
      } catch (const std::logic_error&) {
        throw DataError("vocabulary index is not a number");
      }
      if (idx != v.tokens_.size()) throw DataError("vocabulary indices not dense");
      v.add(line.substr(0, tab));
    }
    if (v.size() < 2 || v.tokens_[0] != "<pad>" || v.tokens_[1] != "<unk>") {
      throw DataError("vocabulary must start with <pad> and <unk>");
    }
    return v;
  }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> tokens_;
};

struct LstmConfig {
  std::size_t vocab_size = 2;
  std::size_t embed = 64;
  std::size_t hidden = 128;
};

// Single-layer LSTM over a sequence of input vectors of length `embed`.
// Gates are laid out [input | forget | output | candidate] in the fused
// (embed + hidden) x 4h weight. Returns the final hidden state.
template <typename T>
Var<T> lstm_run(Tape<T>& tape, ParameterStore<T>& store, const LstmConfig& cfg,
                const std::vector<Var<T>>& inputs) {
  if (inputs.empty()) throw ContractError("lstm over an empty sequence");
  const std::size_t H = cfg.hidden;
  auto& w = store.get_or_create("encoder.lstm.cell.weight",
                                {cfg.embed + H, 4 * H}, Init::kGlorotUniform);
  auto& b = store.get_or_create("encoder.lstm.cell.bias", {4 * H}, Init::kZeros);
  Var<T> wv = tape.param(w), bv = tape.param(b);
  Var<T> h = tape.constant(Tensor<T>({H}));
  Var<T> c = tape.constant(Tensor<T>({H}));
  for (const auto& x : inputs) {
    auto z = fully_connected(concat(x, h), wv, bv);
    auto in_gate = sigmoid(slice(z, 0, H));
    auto forget_gate = sigmoid(slice(z, H, H));
    auto out_gate = sigmoid(slice(z, 2 * H, H));
    auto candidate = tanh(slice(z, 3 * H, H));
    c = add(mul(forget_gate, c), mul(in_gate, candidate));
    h = mul(out_gate, tanh(c));
  }
  return h;
}

template <typename T>
Var<T> embed_tokens_and_run(Tape<T>& tape, ParameterStore<T>& store,
                            const LstmConfig& cfg,
                            const std::vector<std::size_t>& tokens,
                            std::optional<Var<T>> prefix = std::nullopt) {
  auto& table = store.get_or_create("encoder.lstm.embed.weight",
                                    {cfg.vocab_size, cfg.embed},
                                    Init::kGlorotUniform);
  Var<T> tv = tape.param(table);
  std::vector<Var<T>> inputs;
  if (prefix) inputs.push_back(*prefix);
  for (std::size_t t : tokens) inputs.push_back(row(tv, t));
  return lstm_run(tape, store, cfg, inputs);
}

template <typename T>
Var<T> lstm_encode(Tape<T>& tape, ParameterStore<T>& store,
                   const LstmConfig& cfg, const std::vector<std::size_t>& tokens) {
  if (tokens.empty()) throw ContractError("lstm_encode: empty token sequence");
  return embed_tokens_and_run(tape, store, cfg, tokens);
}

// Without a question encoding: softmax(root_rep). With one:
// softmax(FC2(relu(root_rep + FC1(question_h)))).
template <typename T>
Var<T> fuse_and_classify(Tape<T>& tape, ParameterStore<T>& store,
                         Var<T> root_rep, std::optional<Var<T>> question_h,
                         std::size_t num_answers) {
  if (!question_h) {
    if (root_rep.value().size() != num_answers) {
      throw ShapeError("answer representation length " +
                       std::to_string(root_rep.value().size()) + " vs " +
                       std::to_string(num_answers) + " answers");
    }
    return softmax(root_rep);
  }
  const std::size_t d = root_rep.value().size();
  const std::size_t h = question_h->value().size();
  auto& w1 = store.get_or_create("fusion.head.fc1.weight", {h, d}, Init::kGlorotUniform);
  auto& b1 = store.get_or_create("fusion.head.fc1.bias", {d}, Init::kZeros);
  auto& w2 = store.get_or_create("fusion.head.fc2.weight", {d, num_answers},
                                 Init::kGlorotUniform);
  auto& b2 = store.get_or_create("fusion.head.fc2.bias", {num_answers}, Init::kZeros);
  auto proj = fully_connected(*question_h, tape.param(w1), tape.param(b1));
  auto hidden = relu(add(root_rep, proj));
  return softmax(fully_connected(hidden, tape.param(w2), tape.param(b2)));
}

// Image-as-first-word baseline: pooled conv features are projected into
// the embedding space and read before the question tokens.
template <typename T>
Var<T> vis_lstm_baseline(Tape<T>& tape, ParameterStore<T>& store,
                         const ConvStackConfig& conv, const LstmConfig& lstm,
                         Var<T> image, const std::vector<std::size_t>& tokens,
                         std::size_t num_answers) {
  auto features = conv_features(tape, store, conv, image);
  auto pooled = global_avg_pool(features);
  const std::size_t C = pooled.value().size();
  auto& pw = store.get_or_create("baseline.vis.proj.weight", {C, lstm.embed},
                                 Init::kGlorotUniform);
  auto& pb = store.get_or_create("baseline.vis.proj.bias", {lstm.embed}, Init::kZeros);
  auto img_token = fully_connected(pooled, tape.param(pw), tape.param(pb));
  auto h = embed_tokens_and_run(tape, store, lstm, tokens, std::optional<Var<T>>(img_token));
  auto& ow = store.get_or_create("baseline.vis.out.weight", {lstm.hidden, num_answers},
                                 Init::kGlorotUniform);
  auto& ob = store.get_or_create("baseline.vis.out.bias", {num_answers}, Init::kZeros);
  return softmax(fully_connected(h, tape.param(ow), tape.param(ob)));
}

}  // namespace nmn
