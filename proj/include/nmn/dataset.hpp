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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/image_io.hpp"
#include "nmn/layout.hpp"
#include "nmn/parameter_store.hpp"
#include "nmn/question.hpp"
#include "nmn/scene.hpp"

namespace nmn {

// Generator configuration; serialized as key=value lines.
struct DataConfig {
  std::size_t grid = 3;
  std::size_t image_px = 30;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 6;
  std::size_t questions = 244;
  std::size_t images_per_question = 64;
  std::size_t test_pairs = 1024;
  std::uint64_t seed = 1;
  std::size_t max_layout_size = 6;
  bool next_to = false;

  // 61 questions x 16 images.
  static DataConfig fast() {
    DataConfig c;
    c.questions = 61;
    c.images_per_question = 16;
    c.test_pairs = 128;
    return c;
  }

  std::size_t pairs() const { return questions * images_per_question; }

  void validate() const {
    if (grid == 0 || grid > 8) throw DataError("grid must be in [1, 8]");
    if (image_px != grid * kCellPx) {
      throw DataError("image_px must equal grid * " + std::to_string(kCellPx));
    }
    if (min_shapes > max_shapes || max_shapes > grid * grid) {
      throw DataError("invalid min_shapes/max_shapes");
    }
    if (questions == 0 || images_per_question == 0) {
      throw DataError("questions and images_per_question must be positive");
    }
    if (test_pairs >= pairs()) throw DataError("test_pairs must be < total pairs");
    if (max_layout_size < 4) throw DataError("max_layout_size must be >= 4");
  }

  std::string text() const {
    std::ostringstream os;
    os << "grid=" << grid << "\n"
       << "image_px=" << image_px << "\n"
       << "min_shapes=" << min_shapes << "\n"
       << "max_shapes=" << max_shapes << "\n"
       << "questions=" << questions << "\n"
       << "images_per_question=" << images_per_question << "\n"
       << "test_pairs=" << test_pairs << "\n"
       << "seed=" << seed << "\n"
       << "max_layout_size=" << max_layout_size << "\n"
       << "next_to=" << (next_to ? 1 : 0) << "\n";
    return os.str();
  }

  std::string hash() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(text());
    return os.str();
  }

  // Applies key=value lines over the current values.
  void apply(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      auto trim = [](std::string s) {
        const char* ws = " \t\r";
        s.erase(0, s.find_first_not_of(ws));
        s.erase(s.find_last_not_of(ws) + 1);
        return s;
      };
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw DataError("config line " + std::to_string(lineno) + ": missing '='");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      std::uint64_t v;
      try {
        std::size_t used = 0;
        v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::logic_error&) {
        throw DataError("config line " + std::to_string(lineno) +
                        ": bad value '" + value + "'");
      }
      if (key == "grid") grid = v;
      else if (key == "image_px") image_px = v;
      else if (key == "min_shapes") min_shapes = v;
      else if (key == "max_shapes") max_shapes = v;
      else if (key == "questions") questions = v;
      else if (key == "images_per_question") images_per_question = v;
      else if (key == "test_pairs") test_pairs = v;
      else if (key == "seed") seed = v;
      else if (key == "max_layout_size") max_layout_size = v;
      else if (key == "next_to") next_to = v != 0;
      else throw DataError("config line " + std::to_string(lineno) +
                           ": unknown key '" + key + "'");
    }
  }

  static DataConfig parse(const std::string& text) { return parse(text, DataConfig()); }
  static DataConfig parse(const std::string& text, DataConfig base) {
    base.apply(text);
    return base;
  }
};

struct ManifestRecord {
  std::string split;
  std::string image_path;  // relative to the dataset directory
  std::string question;
  std::string query;
  std::string answer;
  std::size_t layout_size = 0;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> info;  // generation statistics

  std::size_t count(const std::string& split) const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(),
        [&](const auto& r) { return r.split == split; }));
  }
};

inline constexpr const char* kManifestHeader =
    "split\timage_path\tquestion\tquery\tanswer\tlayout_size";

inline std::string manifest_tsv(const std::vector<ManifestRecord>& records) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    out += r.split + "\t" + r.image_path + "\t" + r.question + "\t" + r.query +
           "\t" + r.answer + "\t" + std::to_string(r.layout_size) + "\n";
  }
  return out;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::vector<ManifestRecord> parse_manifest_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw DataError("manifest header mismatch");
  }
  std::vector<ManifestRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 6) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " +
                      std::to_string(f.size()) + " columns");
    }
    ManifestRecord r{f[0], f[1], f[2], f[3], f[4], 0};
    try {
      r.layout_size = std::stoul(f[5]);
    } catch (const std::logic_error&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": bad layout_size");
    }
    if (r.split != "train" && r.split != "test") {
      throw DataError("manifest line " + std::to_string(lineno) + ": bad split");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline std::string key_values_text(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

// Writes images/q{qid}/i{iid}.ppm, manifest.tsv, scenes.tsv, config.txt and
// manifest_info.txt under `out_dir`. Each question gets
// images_per_question scenes rejection-sampled toward a yes/no balance;
// every scene in the dataset is distinct, so holding out pairs also holds
// out scenes.
inline DatasetManifest generate_dataset(const DataConfig& cfg,
                                        const std::string& out_dir,
                                        std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate();
  QuestionConfig qc;
  qc.count = cfg.questions;
  qc.max_layout_size = cfg.max_layout_size;
  qc.next_to = cfg.next_to;
  qc.seed = cfg.seed;
  const QuestionSet qset = enumerate_questions(qc);

  std::mt19937_64 rng(cfg.seed);
  const SceneConfig sc{cfg.grid, cfg.min_shapes, cfg.max_shapes};
  std::unordered_set<std::string> used;
  std::vector<ManifestRecord> records;
  std::vector<std::string> scenes;
  std::size_t imbalanced = 0, yes_total = 0;
  std::string imbalance_list;
  const std::size_t ipq = cfg.images_per_question;
  const std::size_t budget = 500 * ipq;

  fs::create_directories(fs::path(out_dir) / "images");
  for (std::size_t qid = 0; qid < qset.questions.size(); ++qid) {
    const auto& q = qset.questions[qid];
    const std::string qdir = "images/q" + std::to_string(qid);
    fs::create_directories(fs::path(out_dir) / qdir);
    std::size_t want_yes = ipq / 2, want_no = ipq - want_yes;
    std::size_t attempts = 0, yes = 0;
    for (std::size_t iid = 0; iid < ipq;) {
      Scene s = sample_scene(rng, sc);
      ++attempts;
      std::string ser = s.serialize();
      if (used.count(ser)) continue;
      const std::string ans = oracle_answer(s, q.query);
      const bool is_yes = ans == "yes";
      if (attempts <= budget) {
        if (is_yes && want_yes == 0) continue;
        if (!is_yes && want_no == 0) continue;
      }
      if (is_yes) {
        if (want_yes) --want_yes;
        ++yes;
      } else if (want_no) {
        --want_no;
      }
      used.insert(ser);
      const std::string path = qdir + "/i" + std::to_string(iid) + ".ppm";
      write_pnm((fs::path(out_dir) / path).string(), render(s));
      records.push_back({"train", path, q.text, q.query.str(), ans, q.layout_size});
      scenes.push_back(std::move(ser));
      ++iid;
    }
    yes_total += yes;
    if (yes != ipq / 2) {
      ++imbalanced;
      imbalance_list += (imbalance_list.empty() ? "" : ",") + std::to_string(qid) +
                        ":" + std::to_string(yes) + "/" + std::to_string(ipq);
      if (log) {
        *log << "warning: question " << qid << " '" << q.text << "' reached "
             << yes << " yes of " << ipq << "\n";
      }
    }
  }

  // Seeded hold-out of test pairs.
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 split_rng(cfg.seed ^ 0x53504C4954ULL);
  for (std::size_t i = 0; i < cfg.test_pairs; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(split_rng)]);
  }
  for (std::size_t i = 0; i < cfg.test_pairs; ++i) records[order[i]].split = "test";

  DatasetManifest m;
  m.records = records;
  m.config_hash = cfg.hash();
  m.seed = cfg.seed;
  auto& info = m.info;
  info["config_hash"] = m.config_hash;
  info["seed"] = std::to_string(cfg.seed);
  info["questions"] = std::to_string(qset.questions.size());
  info["pairs"] = std::to_string(records.size());
  info["train_pairs"] = std::to_string(m.count("train"));
  info["test_pairs"] = std::to_string(m.count("test"));
  info["question_pool"] = std::to_string(qset.pool_size);
  for (const auto& [size, n] : qset.pool_by_size)
    info["question_pool_size" + std::to_string(size)] = std::to_string(n);
  std::map<std::size_t, std::size_t> chosen;
  for (const auto& q : qset.questions) ++chosen[q.layout_size];
  for (const auto& [size, n] : chosen)
    info["questions_size" + std::to_string(size)] = std::to_string(n);
  info["yes_answers"] = std::to_string(yes_total);
  info["imbalanced_questions"] = std::to_string(imbalanced);
  info["imbalance_detail"] = imbalance_list;

  std::string scene_tsv = "image_path\tscene\n";
  for (std::size_t i = 0; i < records.size(); ++i)
    scene_tsv += records[i].image_path + "\t" + scenes[i] + "\n";
  write_file((fs::path(out_dir) / "manifest.tsv").string(), manifest_tsv(records));
  write_file((fs::path(out_dir) / "scenes.tsv").string(), scene_tsv);
  write_file((fs::path(out_dir) / "config.txt").string(), cfg.text());
  write_file((fs::path(out_dir) / "manifest_info.txt").string(),
             key_values_text(info));
  return m;
}

// Reads manifest.tsv and checks it against config.txt via the stored hash.
inline DatasetManifest load_manifest(const std::string& dir, DataConfig* cfg_out = nullptr) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  DatasetManifest m;
  m.records = parse_manifest_tsv(read_file((root / "manifest.tsv").string()));
  m.info = parse_key_values(read_file((root / "manifest_info.txt").string()));
  const DataConfig cfg = DataConfig::parse(read_file((root / "config.txt").string()));
  m.config_hash = m.info["config_hash"];
  if (m.config_hash != cfg.hash()) {
    throw DataError("config hash mismatch: manifest_info has " + m.config_hash +
                    ", config.txt hashes to " + cfg.hash());
  }
  m.seed = cfg.seed;
  if (cfg_out) *cfg_out = cfg;
  return m;
}

inline std::map<std::string, std::string> load_scene_table(const std::string& dir) {
  std::istringstream in(
      read_file((std::filesystem::path(dir) / "scenes.tsv").string()));
  std::map<std::string, std::string> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto f = split_tabs(line);
    if (f.size() == 2) out[f[0]] = f[1];
  }
  return out;
}

// Recovers the symbolic scene from a rendered image by classifying each
// cell's lit pixels (color from the channel, glyph from the pixel count).
inline Scene scene_from_image(const Image& img, std::size_t grid) {
  if (img.width != grid * kCellPx || img.height != grid * kCellPx || img.channels != 3) {
    throw DataError("image does not match grid " + std::to_string(grid));
  }
  std::map<std::size_t, Glyph> by_count;
  for (Glyph g : {Glyph::kCircle, Glyph::kSquare, Glyph::kTriangle}) {
    std::size_t n = 0;
    for (std::size_t y = 0; y < kCellPx; ++y)
      for (std::size_t x = 0; x < kCellPx; ++x) n += glyph_covers(g, x, y);
    by_count[n] = g;
  }
  Scene s(grid);
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      std::size_t lit = 0;
      int channel = -1;
      for (std::size_t y = 0; y < kCellPx; ++y) {
        for (std::size_t x = 0; x < kCellPx; ++x) {
          const auto* p = img.px(c * kCellPx + x, r * kCellPx + y);
          int on = -1, count = 0;
          for (int k = 0; k < 3; ++k) {
            if (p[k] == 255) { on = k; ++count; }
            else if (p[k] != 0) throw DataError("unexpected pixel value");
          }
          if (count == 0) continue;
          if (count > 1 || (channel >= 0 && channel != on)) {
            throw DataError("mixed colors in a cell");
          }
          channel = on;
          ++lit;
        }
      }
      if (lit == 0) continue;
      auto it = by_count.find(lit);
      if (it == by_count.end()) throw DataError("unrecognized glyph raster");
      s.at(r, c) = SceneObject{it->second, static_cast<Color>(channel)};
    }
  }
  return s;
}

}  // namespace nmn
