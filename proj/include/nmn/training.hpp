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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nmn/adadelta.hpp"
#include "nmn/augment.hpp"
#include "nmn/dataset.hpp"
#include "nmn/model.hpp"

namespace nmn {

struct TrainConfig {
  ModelKind kind = ModelKind::kNmn;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  std::optional<std::size_t> exclude_size;
  // Stop after this many epochs without a validation improvement (0: never).
  std::size_t patience = 8;
  double val_fraction = 0.05;
  bool batch_by_shape = true;
  AdadeltaConfig optimizer;
  std::size_t fusion_dim = 64;
  std::size_t lstm_embed = 64;
  std::size_t lstm_hidden = 128;
  bool share_type_level = false;
  // Redraw every training pair each epoch under a random answer-preserving
  // scene symmetry (color permutation x grid dihedral group).
  bool augment = false;
  std::ostream* log = nullptr;

  // Preset for the reduced dataset: 848 training pairs are memorized
  // without augmentation, and smaller batches buy more updates per epoch.
  static TrainConfig fast() {
    TrainConfig c;
    c.epochs = 120;
    c.batch_size = 16;
    c.patience = 0;
    c.augment = true;
    return c;
  }
};

struct SplitMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0;
  double accuracy = 0;
  std::map<std::size_t, double> by_size;
};

inline constexpr const char* kMetricsHeader =
    "epoch,split,loss,accuracy,acc_size4,acc_size5,acc_size6";

inline std::string metrics_csv(const std::vector<SplitMetrics>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << "\n" << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.accuracy;
    for (std::size_t s : {4, 5, 6}) {
      os << ',';
      auto it = r.by_size.find(s);
      if (it != r.by_size.end()) os << it->second;
    }
    os << "\n";
  }
  return os.str();
}

struct QuestionAccuracy {
  std::string question;
  std::size_t layout_size = 0;
  std::size_t total = 0;
  std::size_t correct = 0;
};

struct Tally {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy() const { return total ? double(correct) / double(total) : 0.0; }
};

struct EvalReport {
  Tally overall;
  std::map<std::size_t, Tally> by_size;
  std::vector<QuestionAccuracy> questions;
  std::string majority_answer;
  Tally majority;
  std::map<std::size_t, Tally> majority_by_size;
  double mean_loss = 0;

  double accuracy() const { return overall.accuracy(); }
  double size_accuracy(std::size_t s) const {
    auto it = by_size.find(s);
    return it == by_size.end() ? 0.0 : it->second.accuracy();
  }

  std::string csv() const {
    std::ostringstream os;
    os << "scope,key,total,correct,accuracy\n" << std::fixed << std::setprecision(6);
    auto row = [&](const std::string& scope, const std::string& key, const Tally& t) {
      os << scope << ',' << key << ',' << t.total << ',' << t.correct << ','
         << t.accuracy() << "\n";
    };
    row("model", "all", overall);
    for (const auto& [s, t] : by_size) row("model", "size" + std::to_string(s), t);
    row("majority", "all", majority);
    for (const auto& [s, t] : majority_by_size)
      row("majority", "size" + std::to_string(s), t);
    for (const auto& q : questions) {
      std::string text = q.question;
      row("question", "\"" + text + "\"", Tally{q.total, q.correct});
    }
    return os.str();
  }
};

struct LoadedData {
  DataConfig config;
  DatasetManifest manifest;
  std::vector<Image> images;  // parallel to manifest.records
};

inline LoadedData load_data(const std::string& dir) {
  namespace fs = std::filesystem;
  LoadedData d;
  d.manifest = load_manifest(dir, &d.config);
  d.images.reserve(d.manifest.records.size());
  for (const auto& r : d.manifest.records) {
    d.images.push_back(read_pnm((fs::path(dir) / r.image_path).string()));
  }
  return d;
}

template <typename T>
std::size_t argmax(const Tensor<T>& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

// Answer with the highest count in `records`; ties go to the earlier entry
// of the sorted answer list.
inline std::string majority_answer(const std::vector<const ManifestRecord*>& records,
                                   const std::vector<std::string>& answers) {
  std::map<std::string, std::size_t> counts;
  for (const auto* r : records) ++counts[r->answer];
  std::string best = answers.front();
  for (const auto& a : answers)
    if (counts[a] > counts[best]) best = a;
  return best;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const std::vector<Example>& examples,
                    const std::string& majority) {
  EvalReport rep;
  rep.majority_answer = majority;
  std::map<std::string, std::size_t> qindex;
  double loss = 0;
  for (const auto& ex : examples) {
    Tape<T> tape;
    auto p = model.forward(tape, ex, ParamPolicy::kRequireExisting);
    const bool ok = argmax(p.value()) == ex.label;
    loss += -std::log(static_cast<double>(p.value()[ex.label]) + kNllEpsilon);
    ++rep.overall.total;
    rep.overall.correct += ok;
    auto& bs = rep.by_size[ex.layout_size];
    ++bs.total;
    bs.correct += ok;
    const bool mok = model.spec().answers[ex.label] == majority;
    ++rep.majority.total;
    rep.majority.correct += mok;
    auto& ms = rep.majority_by_size[ex.layout_size];
    ++ms.total;
    ms.correct += mok;
    auto [it, inserted] = qindex.emplace(ex.question, rep.questions.size());
    if (inserted) rep.questions.push_back({ex.question, ex.layout_size, 0, 0});
    auto& q = rep.questions[it->second];
    ++q.total;
    q.correct += ok;
  }
  rep.mean_loss = examples.empty() ? 0.0 : loss / double(examples.size());
  return rep;
}

inline std::vector<std::string> answer_set(const std::vector<const ManifestRecord*>& recs) {
  std::set<std::string> s;
  for (const auto* r : recs) s.insert(r->answer);
  return {s.begin(), s.end()};
}

inline Vocabulary build_vocabulary(const std::vector<const ManifestRecord*>& recs) {
  Vocabulary v;
  for (const auto* r : recs)
    for (const auto& t : tokenize_question(r->question)) v.add(t);
  return v;
}

template <typename T>
std::vector<Example> make_examples(const LoadedData& data, const std::string& split,
                                   const Model<T>& model) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
    const auto& r = data.manifest.records[i];
    if (r.split != split) continue;
    out.push_back(make_example(data.images[i], r.question, r.query,
                               model.spec().answer_index(r.answer), model.vocab()));
  }
  return out;
}

struct TrainResult {
  Model<float> model;
  std::vector<SplitMetrics> metrics;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0;
  double seconds = 0;
  std::string majority;  // train-split majority answer
};

namespace detail {

struct ParamState {
  Tensor<float> value, sq_grad, sq_delta;
};

inline std::map<std::string, ParamState> snapshot(const ParameterStore<float>& s) {
  std::map<std::string, ParamState> out;
  for (const auto& [n, p] : s) out.emplace(n, ParamState{p.value, p.sq_grad, p.sq_delta});
  return out;
}

inline void restore(ParameterStore<float>& s, const std::map<std::string, ParamState>& snap) {
  for (auto& [n, p] : s) {
    auto it = snap.find(n);
    if (it == snap.end()) continue;
    p.value = it->second.value;
    p.sq_grad = it->second.sq_grad;
    p.sq_delta = it->second.sq_delta;
  }
}

inline SplitMetrics summarize(std::size_t epoch, const std::string& split, double loss,
                              const Tally& all, const std::map<std::size_t, Tally>& by) {
  SplitMetrics m;
  m.epoch = epoch;
  m.split = split;
  m.loss = all.total ? loss / double(all.total) : 0.0;
  m.accuracy = all.accuracy();
  for (const auto& [s, t] : by) m.by_size[s] = t.accuracy();
  return m;
}

}  // namespace detail

namespace detail {

// Symmetry-augmented copies of the training pairs. Scenes are recovered
// from the rendered images; a transformed scene that coincides with a
// held-out test scene is replaced by the untransformed pair.
class Augmenter {
 public:
  Augmenter(const LoadedData& data, const std::vector<std::size_t>& records, bool enabled)
      : data_(data), records_(records) {
    if (!enabled) return;
    for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
      if (data.manifest.records[i].split == "test")
        test_scenes_.insert(scene_from_image(data.images[i], data.config.grid).serialize());
    }
    for (auto i : records) scenes_.push_back(scene_from_image(data.images[i], data.config.grid));
  }

  const std::vector<Example>& draw(const std::vector<Example>& base, const Model<float>& model,
                                   std::mt19937_64& rng) {
    current_.clear();
    current_.reserve(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
      const SceneSymmetry sym = random_symmetry(rng);
      auto ex = transformed(k, sym, model);
      current_.push_back(ex ? std::move(*ex) : base[k]);
    }
    return current_;
  }

  // One transformed copy per symmetry class of relation labels, enough to
  // instantiate every module instance the augmented data can reach.
  std::vector<Example> orbit_representatives(const std::vector<Example>& base,
                                             const Model<float>& model) const {
    std::vector<Example> out;
    for (int t = 0; t < 2; ++t)
      for (int fr = 0; fr < 2; ++fr)
        for (int fc = 0; fc < 2; ++fc)
          for (std::size_t k = 0; k < base.size(); ++k) {
            SceneSymmetry sym;
            sym.transpose = t;
            sym.flip_rows = fr;
            sym.flip_cols = fc;
            if (auto ex = transformed(k, sym, model, false)) out.push_back(std::move(*ex));
          }
    return out;
  }

 private:
  std::optional<Example> transformed(std::size_t k, const SceneSymmetry& sym,
                                     const Model<float>& model, bool check_test = true) const {
    if (sym.is_identity()) return std::nullopt;
    const Scene scene = apply(sym, scenes_[k]);
    if (check_test && test_scenes_.count(scene.serialize())) return std::nullopt;
    const auto& r = data_.manifest.records[records_[k]];
    const SymbolicQuery q = apply(sym, parse_query(r.query));
    return make_example(render(scene), realize_question(q), q.str(),
                        model.spec().answer_index(oracle_answer(scene, q)), model.vocab());
  }

  const LoadedData& data_;
  const std::vector<std::size_t>& records_;
  std::vector<Scene> scenes_;
  std::set<std::string> test_scenes_;
  std::vector<Example> current_;
};

}  // namespace detail

// Likelihood training with adadelta over layout-grouped batches. The
// returned model holds the parameters of the best validation epoch.
inline TrainResult train(const LoadedData& data, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const ManifestRecord*> train_recs;
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
    const auto& r = data.manifest.records[i];
    if (r.split != "train") continue;
    train_recs.push_back(&r);
    if (cfg.exclude_size && r.layout_size == *cfg.exclude_size) continue;
    train_idx.push_back(i);
  }
  if (train_idx.empty()) throw DataError("no training pairs");

  ModelSpec spec;
  spec.kind = cfg.kind;
  spec.answers = answer_set(train_recs);
  spec.image_px = data.config.image_px;
  spec.att = 3 * data.config.grid;
  spec.fusion_dim = cfg.fusion_dim;
  spec.lstm_embed = cfg.lstm_embed;
  spec.lstm_hidden = cfg.lstm_hidden;
  spec.share_type_level = cfg.share_type_level;
  spec.seed = cfg.seed;
  std::vector<const ManifestRecord*> used_recs;
  for (auto i : train_idx) used_recs.push_back(&data.manifest.records[i]);
  TrainResult result{Model<float>(spec, build_vocabulary(used_recs)), {}, 0, 0, 0,
                     majority_answer(train_recs, spec.answers)};
  Model<float>& model = result.model;

  // Seeded validation carve-out.
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = train_idx;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val =
      std::min(order.size() - 1,
               static_cast<std::size_t>(std::llround(cfg.val_fraction * order.size())));
  std::set<std::size_t> val_set(order.begin(), order.begin() + n_val);
  std::vector<Example> train_ex, val_ex;
  std::vector<std::size_t> train_rec;  // manifest index per train example
  for (auto i : train_idx) {
    const auto& r = data.manifest.records[i];
    auto ex = make_example(data.images[i], r.question, r.query,
                           model.spec().answer_index(r.answer), model.vocab());
    if (val_set.count(i)) {
      val_ex.push_back(std::move(ex));
    } else {
      train_ex.push_back(std::move(ex));
      train_rec.push_back(i);
    }
  }

  if (cfg.kind == ModelKind::kMajority) {
    Tensor<float> prior({spec.answers.size()});
    for (const auto& ex : train_ex) prior[ex.label] += 1.0f;
    for (auto& v : prior.data()) v /= static_cast<float>(train_ex.size());
    model.store().insert(kMajorityPrior, prior);
    auto rep = evaluate(model, val_ex, result.majority);
    result.best_val_accuracy = rep.accuracy();
    result.metrics.push_back(detail::summarize(
        0, "val", rep.mean_loss * double(rep.overall.total), rep.overall, rep.by_size));
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }

  detail::Augmenter augmenter(data, train_rec, cfg.augment);

  // Instantiate every parameter up front so creation order never depends on
  // batch order.
  {
    Tape<float> tape;
    std::set<std::string> seen;
    for (const auto& ex : train_ex) {
      if (seen.insert(ex.layout.str()).second) model.forward(tape, ex);
    }
    if (cfg.augment) {
      for (const auto& ex : augmenter.orbit_representatives(train_ex, model)) {
        if (seen.insert(ex.layout.str()).second) model.forward(tape, ex);
      }
    }
    // Instances that only occur in held-out layouts (validation, test, or an
    // excluded size) keep their seeded initial values; they are created so
    // evaluation can run and are reported as untrained.
    if (cfg.kind != ModelKind::kVisLstm) {
      std::set<std::string> untrained;
      for (const auto& r : data.manifest.records) {
        const auto layout = layout_from_query(parse_query(r.query), Domain::kShapes);
        if (!seen.insert(layout.str()).second) continue;
        for (const LayoutNode* n : layout.post_order()) {
          const auto specs = module_param_specs(n->key.type, spec.modules());
          const auto name = param_name(n->key, spec.modules(), specs.front().layer,
                                       specs.front().role);
          if (!model.store().contains(name)) untrained.insert(n->key.str());
        }
        Network<float>(layout, model.store(), model.spec().modules());
      }
      if (cfg.log && !untrained.empty()) {
        *cfg.log << "untrained instances:";
        for (const auto& k : untrained) *cfg.log << ' ' << k;
        *cfg.log << "\n";
      }
    }
  }

  std::optional<std::map<std::string, detail::ParamState>> best;
  double best_acc = -1;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 erng(cfg.seed * 1000003ULL + epoch);
    const std::vector<Example>& epoch_ex =
        cfg.augment ? augmenter.draw(train_ex, model, erng) : train_ex;
    std::vector<Layout> layouts;
    for (const auto& ex : epoch_ex) layouts.push_back(ex.layout);
    const auto batches = group_by_layout(layouts, {cfg.batch_by_shape, cfg.batch_size});
    std::vector<std::size_t> border(batches.size());
    for (std::size_t i = 0; i < border.size(); ++i) border[i] = i;
    std::shuffle(border.begin(), border.end(), erng);

    double loss_sum = 0;
    Tally all;
    std::map<std::size_t, Tally> by;
    for (std::size_t b : border) {
      std::vector<const Example*> batch;
      for (auto i : batches[b]) batch.push_back(&epoch_ex[i]);
      Tape<float> tape;
      std::vector<Var<float>> preds;
      auto loss = model.batch_loss(tape, batch, &preds);
      tape.backward(loss);
      adadelta_step(model.store(), cfg.optimizer);
      loss_sum += loss.value().item() * double(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const bool ok = argmax(preds[k].value()) == batch[k]->label;
        ++all.total;
        all.correct += ok;
        auto& t = by[batch[k]->layout_size];
        ++t.total;
        t.correct += ok;
      }
    }
    result.metrics.push_back(detail::summarize(epoch, "train", loss_sum, all, by));
    auto rep = evaluate(model, val_ex, result.majority);
    result.metrics.push_back(detail::summarize(
        epoch, "val", rep.mean_loss * double(rep.overall.total), rep.overall, rep.by_size));
    if (cfg.log) {
      const auto& tm = result.metrics[result.metrics.size() - 2];
      *cfg.log << "epoch " << epoch << " train_loss " << std::fixed << std::setprecision(4)
               << tm.loss << " train_acc " << tm.accuracy << " val_acc "
               << rep.accuracy() << " elapsed "
               << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
               << "s" << std::endl;
    }
    if (rep.accuracy() > best_acc) {
      best_acc = rep.accuracy();
      result.best_epoch = epoch;
      best = detail::snapshot(model.store());
      since_best = 0;
    } else if (cfg.patience && ++since_best >= cfg.patience) {
      break;
    }
  }
  if (best) detail::restore(model.store(), *best);
  result.best_val_accuracy = best_acc;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Writes CKPT (+ .meta, .vocab.tsv) and CKPT.metrics.csv.
inline TrainResult train_to_file(const LoadedData& data, const TrainConfig& cfg,
                                 const std::string& ckpt_path) {
  TrainResult r = train(data, cfg);
  r.model.save(ckpt_path);
  write_file(ckpt_path + ".metrics.csv", metrics_csv(r.metrics));
  return r;
}

// Evaluates a checkpoint on one split of a dataset; the majority row uses
// the train-split answer marginals.
inline EvalReport evaluate_split(Model<float>& model, const LoadedData& data,
                                 const std::string& split) {
  std::vector<const ManifestRecord*> train_recs;
  for (const auto& r : data.manifest.records)
    if (r.split == "train") train_recs.push_back(&r);
  if (train_recs.empty()) throw DataError("dataset has no train split");
  const auto majority = majority_answer(train_recs, model.spec().answers);
  auto examples = make_examples(data, split, model);
  if (examples.empty()) throw DataError("split '" + split + "' is empty");
  return evaluate(model, examples, majority);
}

struct AttentionDump {
  std::vector<std::string> files;
  std::string answer;
  std::vector<double> distribution;
};

// Writes one min-max normalized 8-bit PGM per attention-producing layout
// node plus attention.txt with the layout, raw ranges and the answer
// distribution.
inline AttentionDump dump_attention(Model<float>& model, const Image& image,
                                    const SymbolicQuery& query,
                                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (model.spec().kind != ModelKind::kNmn && model.spec().kind != ModelKind::kNmnLstm) {
    throw DataError("attention dumps need an nmn model");
  }
  fs::create_directories(out_dir);
  Example ex;
  ex.image = image;
  ex.layout = layout_from_query(query, Domain::kShapes);
  ex.layout_size = ex.layout.size();
  ex.query = query.str();
  if (model.spec().kind == ModelKind::kNmnLstm) {
    ex.question = realize_question(query);
    ex.tokens = model.vocab().encode(tokenize_question(ex.question));
  }
  AttentionDump dump;
  std::ostringstream side;
  side << "layout " << ex.layout.str() << "\n";
  Tape<float> tape;
  auto p = model.forward(
      tape, ex, ParamPolicy::kRequireExisting,
      [&](std::size_t idx, const LayoutNode& node, const Var<float>& out) {
        if (output_type(node.key.type) != MessageType::kAttention) return;
        const auto& a = out.value();
        float lo = a[0], hi = a[0];
        for (float v : a.data()) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        Image img(a.dim(1), a.dim(0), 1);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double t = hi > lo ? (a[i] - lo) / (hi - lo) : 0.0;
          img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
        std::string name = "node" + std::to_string(idx) + "_" +
                           std::string(type_name(node.key.type)) + "-" +
                           node.key.instance + ".pgm";
        write_pnm((fs::path(out_dir) / name).string(), img);
        dump.files.push_back(name);
        side << "node " << idx << ' ' << node.key.str() << " min " << lo << " max " << hi
             << " file " << name << "\n";
      });
  const auto& dist = p.value();
  dump.answer = model.spec().answers[argmax(dist)];
  side << "answer " << dump.answer << "\n";
  for (std::size_t i = 0; i < dist.size(); ++i) {
    dump.distribution.push_back(dist[i]);
    side << "p(" << model.spec().answers[i] << ") " << dist[i] << "\n";
  }
  write_file((fs::path(out_dir) / "attention.txt").string(), side.str());
  return dump;
}

}  // namespace nmn
