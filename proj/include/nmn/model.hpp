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
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nmn/checkpoint.hpp"
#include "nmn/dataset.hpp"
#include "nmn/encoders.hpp"
#include "nmn/network.hpp"

namespace nmn {

enum class ModelKind { kNmn, kNmnLstm, kVisLstm, kMajority };

inline std::string model_name(ModelKind k) {
  switch (k) {
    case ModelKind::kNmn: return "nmn";
    case ModelKind::kNmnLstm: return "nmn+lstm";
    case ModelKind::kVisLstm: return "vis+lstm";
    case ModelKind::kMajority: return "majority";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  for (auto k : {ModelKind::kNmn, ModelKind::kNmnLstm, ModelKind::kVisLstm,
                 ModelKind::kMajority})
    if (model_name(k) == s) return k;
  throw DataError("unknown model '" + s + "'");
}

// Everything needed to rebuild a model around a checkpoint; stored next to
// it as key=value text.
struct ModelSpec {
  ModelKind kind = ModelKind::kNmn;
  std::vector<std::string> answers = {"no", "yes"};
  std::size_t image_px = 30;
  std::size_t att = 9;
  std::size_t channels = 64;
  std::size_t transform_hidden = 32;
  std::size_t fusion_dim = 64;  // d_ans when the LSTM head is on
  std::size_t lstm_embed = 64;
  std::size_t lstm_hidden = 128;
  std::size_t vocab_size = 2;
  bool share_type_level = false;
  std::uint64_t seed = 0;

  bool uses_lstm() const {
    return kind == ModelKind::kNmnLstm || kind == ModelKind::kVisLstm;
  }

  ModuleConfig modules() const {
    ModuleConfig m;
    m.feature_channels = channels;
    m.att_h = m.att_w = att;
    m.transform_hidden = transform_hidden;
    m.d_ans = kind == ModelKind::kNmnLstm ? fusion_dim : answers.size();
    m.share_type_level = share_type_level;
    return m;
  }

  ConvStackConfig conv() const {
    return ConvStackConfig::for_grid(image_px, att, channels);
  }

  LstmConfig lstm() const { return {vocab_size, lstm_embed, lstm_hidden}; }

  std::size_t answer_index(const std::string& a) const {
    auto it = std::find(answers.begin(), answers.end(), a);
    if (it == answers.end()) throw DataError("answer '" + a + "' not in vocabulary");
    return static_cast<std::size_t>(it - answers.begin());
  }

  std::string text() const {
    std::ostringstream os;
    os << "model=" << model_name(kind) << "\nanswers=";
    for (std::size_t i = 0; i < answers.size(); ++i) os << (i ? "," : "") << answers[i];
    os << "\nimage_px=" << image_px << "\natt=" << att << "\nchannels=" << channels
       << "\ntransform_hidden=" << transform_hidden << "\nfusion_dim=" << fusion_dim
       << "\nlstm_embed=" << lstm_embed << "\nlstm_hidden=" << lstm_hidden
       << "\nvocab_size=" << vocab_size
       << "\nshare_type_level=" << (share_type_level ? 1 : 0) << "\nseed=" << seed
       << "\n";
    return os.str();
  }

  static ModelSpec parse(const std::string& text) {
    auto kv = parse_key_values(text);
    auto need = [&](const char* k) -> std::string {
      auto it = kv.find(k);
      if (it == kv.end()) throw DataError(std::string("model meta lacks ") + k);
      return it->second;
    };
    auto num = [&](const char* k) -> std::uint64_t {
      try {
        return std::stoull(need(k));
      } catch (const std::logic_error&) {
        throw DataError(std::string("model meta: bad ") + k);
      }
    };
    ModelSpec s;
    s.kind = parse_model_kind(need("model"));
    s.answers.clear();
    std::string a = need("answers");
    std::size_t start = 0;
    for (std::size_t i = 0; i <= a.size(); ++i) {
      if (i == a.size() || a[i] == ',') {
        s.answers.push_back(a.substr(start, i - start));
        start = i + 1;
      }
    }
    s.image_px = num("image_px");
    s.att = num("att");
    s.channels = num("channels");
    s.transform_hidden = num("transform_hidden");
    s.fusion_dim = num("fusion_dim");
    s.lstm_embed = num("lstm_embed");
    s.lstm_hidden = num("lstm_hidden");
    s.vocab_size = num("vocab_size");
    s.share_type_level = num("share_type_level") != 0;
    s.seed = num("seed");
    return s;
  }
};

// One (question, image) pair ready for the model.
struct Example {
  Image image;
  Layout layout;
  std::vector<std::size_t> tokens;
  std::size_t label = 0;
  std::size_t layout_size = 0;
  std::string question;
  std::string query;
};

inline constexpr const char* kMajorityPrior = "majority.answer.prior";

// Parameter store plus the recipe that maps an example to an answer
// distribution.
template <typename T>
class Model {
 public:
  Model(ModelSpec spec, Vocabulary vocab)
      : spec_(std::move(spec)), vocab_(std::move(vocab)), store_(spec_.seed) {
    spec_.vocab_size = vocab_.size();
  }

  Model(ModelSpec spec, Vocabulary vocab, ParameterStore<T> store)
      : spec_(std::move(spec)), vocab_(std::move(vocab)), store_(std::move(store)) {
    spec_.vocab_size = vocab_.size();
  }

  const ModelSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }

  // Answer distribution for one example, recorded on `tape`.
  Var<T> forward(Tape<T>& tape, const Example& ex,
                 ParamPolicy policy = ParamPolicy::kCreateMissing,
                 const typename Network<T>::Observer& observe = {}) {
    const std::size_t n = spec_.answers.size();
    switch (spec_.kind) {
      case ModelKind::kMajority:
        return tape.constant(store_.get(kMajorityPrior).value);
      case ModelKind::kVisLstm:
        return vis_lstm_baseline(tape, store_, spec_.conv(), spec_.lstm(),
                                 tape.constant(image_tensor<T>(ex.image)),
                                 ex.tokens, n);
      case ModelKind::kNmn:
      case ModelKind::kNmnLstm:
        break;
    }
    Network<T> net(ex.layout, store_, spec_.modules(), policy);
    auto features = conv_features(tape, store_, spec_.conv(), ex.image);
    auto rep = net(tape, features, observe);
    std::optional<Var<T>> qh;
    if (spec_.kind == ModelKind::kNmnLstm) {
      qh = lstm_encode(tape, store_, spec_.lstm(), ex.tokens);
    }
    return fuse_and_classify(tape, store_, rep, qh, n);
  }

  // Mean negative log-likelihood over a batch on one shared tape.
  Var<T> batch_loss(Tape<T>& tape, const std::vector<const Example*>& batch,
                    std::vector<Var<T>>* predictions = nullptr) {
    std::vector<Var<T>> losses;
    for (const Example* ex : batch) {
      auto p = forward(tape, *ex);
      if (predictions) predictions->push_back(p);
      losses.push_back(nll_loss(p, ex->label));
    }
    return scale(add_n(losses), T{1} / static_cast<T>(losses.size()));
  }

  void save(const std::string& path) const {
    save_checkpoint(store_, path);
    write_file(path + ".meta", spec_.text());
    write_file(path + ".vocab.tsv", vocab_.tsv());
  }

  static Model load(const std::string& path) {
    auto spec = ModelSpec::parse(read_file(path + ".meta"));
    auto vocab = Vocabulary::from_tsv(read_file(path + ".vocab.tsv"));
    auto store = load_checkpoint<T>(path, spec.seed);
    if (vocab.size() != spec.vocab_size) throw DataError("vocabulary size mismatch");
    return Model(std::move(spec), std::move(vocab), std::move(store));
  }

 private:
  ModelSpec spec_;
  Vocabulary vocab_;
  ParameterStore<T> store_;
};

// Builds a model-ready example from manifest fields.
inline Example make_example(Image image, const std::string& question,
                            const std::string& query, std::size_t label,
                            const Vocabulary& vocab) {
  Example ex;
  ex.image = std::move(image);
  ex.question = question;
  ex.query = query;
  ex.layout = layout_from_query(parse_query(query), Domain::kShapes);
  ex.layout_size = ex.layout.size();
  ex.tokens = vocab.encode(tokenize_question(question));
  if (ex.tokens.empty()) ex.tokens.push_back(Vocabulary::kUnknown);
  ex.label = label;
  return ex;
}

}  // namespace nmn
