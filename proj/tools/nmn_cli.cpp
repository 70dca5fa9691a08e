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

// Command-line front end: data generation, training, evaluation,
// prediction, attention dumps, gradient checks and corpus statistics.
// Exit codes: 0 ok, 1 usage, 2 data/parse errors, 3 numerical failures.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nmn/nmn.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct Args {
  std::string config, out, data, model = "nmn", ckpt, split = "test", report, image,
      question, query, expr, op;
  std::uint64_t seed = 1;
  bool seed_given = false;
  bool fast = false;
  std::optional<std::size_t> exclude_size, epochs, patience, batch_size;
  std::optional<double> weight_decay;
  bool quiet = false;
  bool augment = false;
};

void print_distribution(const nmn::Model<float>& model, const nmn::Tensor<float>& p) {
  std::cout << "answer " << model.spec().answers[nmn::argmax(p)] << "\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    std::cout << "p(" << model.spec().answers[i] << ") " << std::fixed
              << std::setprecision(6) << p[i] << "\n";
}

int cmd_gen_data(const Args& a) {
  nmn::DataConfig cfg = a.fast ? nmn::DataConfig::fast() : nmn::DataConfig();
  if (!a.config.empty()) cfg = nmn::DataConfig::parse(nmn::read_file(a.config), cfg);
  if (a.seed_given) cfg.seed = a.seed;
  auto m = nmn::generate_dataset(cfg, a.out, a.quiet ? nullptr : &std::cerr);
  std::cout << "questions " << cfg.questions << "\npairs " << m.records.size()
            << "\ntrain " << m.count("train") << "\ntest " << m.count("test") << "\n";
  return kExitOk;
}

int cmd_train(const Args& a) {
  const auto data = nmn::load_data(a.data);
  nmn::TrainConfig tc = a.fast ? nmn::TrainConfig::fast() : nmn::TrainConfig();
  tc.kind = nmn::parse_model_kind(a.model);
  tc.seed = a.seed;
  tc.exclude_size = a.exclude_size;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.patience) tc.patience = *a.patience;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  tc.augment = tc.augment || a.augment;
  if (a.weight_decay) tc.optimizer.weight_decay = *a.weight_decay;
  if (!a.quiet) tc.log = &std::cerr;
  auto r = nmn::train_to_file(data, tc, a.out);
  std::cout << "best_epoch " << r.best_epoch << "\nval_accuracy " << std::fixed
            << std::setprecision(4) << r.best_val_accuracy << "\nseconds "
            << std::setprecision(1) << r.seconds << "\n";
  return kExitOk;
}

int cmd_eval(const Args& a) {
  auto model = nmn::Model<float>::load(a.ckpt);
  const auto data = nmn::load_data(a.data);
  auto rep = nmn::evaluate_split(model, data, a.split);
  if (!a.report.empty()) nmn::write_file(a.report, rep.csv());
  std::cout << "accuracy " << std::fixed << std::setprecision(4) << rep.accuracy() << "\n";
  for (const auto& [s, t] : rep.by_size)
    std::cout << "accuracy_size" << s << ' ' << t.accuracy() << "\n";
  std::cout << "majority " << rep.majority.accuracy() << "\n";
  return kExitOk;
}

int cmd_predict(const Args& a) {
  auto model = nmn::Model<float>::load(a.ckpt);
  const auto query = nmn::parse_question(a.question);
  const auto ex = nmn::make_example(nmn::read_pnm(a.image), a.question, query.str(), 0,
                                    model.vocab());
  nmn::Tape<float> tape;
  auto p = model.forward(tape, ex, nmn::ParamPolicy::kRequireExisting);
  std::cout << "query " << query.str() << "\nlayout " << ex.layout.str() << "\n";
  print_distribution(model, p.value());
  return kExitOk;
}

int cmd_attn(const Args& a) {
  auto model = nmn::Model<float>::load(a.ckpt);
  auto dump = nmn::dump_attention(model, nmn::read_pnm(a.image), nmn::parse_query(a.query),
                                  a.out);
  for (const auto& f : dump.files) std::cout << f << "\n";
  std::cout << "answer " << dump.answer << "\n";
  return kExitOk;
}

int cmd_query(const Args& a) {
  auto model = nmn::Model<float>::load(a.ckpt);
  if (model.spec().kind != nmn::ModelKind::kNmn) {
    throw nmn::DataError("query needs a checkpoint trained with --model nmn");
  }
  const auto layout = nmn::parse_module_expression(a.expr);
  const auto image = nmn::read_pnm(a.image);
  const auto spec = model.spec();
  nmn::Tape<float> tape;
  nmn::Network<float> net(layout, model.store(), spec.modules(),
                          nmn::ParamPolicy::kRequireExisting);
  auto feats = nmn::conv_features(tape, model.store(), spec.conv(), image);
  auto p = nmn::fuse_and_classify(tape, model.store(), net(tape, feats),
                                  std::optional<nmn::Var<float>>(), spec.answers.size());
  std::cout << "layout " << layout.str() << "\n";
  print_distribution(model, p.value());
  return kExitOk;
}

int cmd_grad_check(const Args& a) {
  const auto names = a.op.empty() ? nmn::grad_check_names()
                                  : std::vector<std::string>{a.op};
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& n : names) {
    auto r = nmn::run_grad_check(n);
    ok &= r.passed();
    std::cout << (r.passed() ? "PASS " : "FAIL ") << std::left << std::setw(16) << n
              << " checked " << r.checked << " skipped " << r.skipped << " max_rel_err "
              << std::scientific << std::setprecision(3) << r.max_error << std::defaultfloat
              << " at " << r.worst << "\n";
  }
  std::cout << "seconds " << std::fixed << std::setprecision(2)
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            << "\n";
  return ok ? kExitOk : kExitNumerical;
}

int cmd_stats(const Args& a) {
  const auto m = nmn::load_manifest(a.data);
  std::vector<nmn::Layout> layouts;
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    if (!seen.insert(r.query).second) continue;
    layouts.push_back(nmn::layout_from_query(nmn::parse_query(r.query), nmn::Domain::kShapes));
  }
  std::cout << nmn::corpus_stats(layouts).tsv();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural module networks on the SHAPES benchmark"};
  app.require_subcommand(1);
  Args a;

  auto* gen = app.add_subcommand("gen-data", "Generate a SHAPES dataset");
  gen->add_option("--config", a.config, "key=value config file");
  gen->add_option("--out", a.out, "Output directory")->required();
  gen->add_flag("--fast", a.fast, "Use the reduced config (61 questions x 16 images)");
  gen->add_option("--seed", a.seed, "Override the config seed")
      ->each([&](const std::string&) { a.seed_given = true; });
  gen->add_flag("--quiet", a.quiet);

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", a.data)->required();
  tr->add_option("--model", a.model)
      ->check(CLI::IsMember({"nmn", "nmn+lstm", "vis+lstm", "majority"}));
  tr->add_option("--seed", a.seed);
  tr->add_option("--out", a.out, "Checkpoint path")->required();
  tr->add_option("--exclude-size", a.exclude_size, "Drop training pairs of this layout size");
  tr->add_option("--epochs", a.epochs);
  tr->add_option("--patience", a.patience, "Early-stopping patience in epochs (0: off)");
  tr->add_option("--batch-size", a.batch_size, "Maximum examples per batch");
  tr->add_option("--weight-decay", a.weight_decay, "L2 penalty coefficient");
  tr->add_flag("--augment", a.augment, "Answer-preserving scene-symmetry augmentation");
  tr->add_flag("--fast", a.fast, "Preset for the reduced dataset (augmented, batch 16, 120 epochs)");
  tr->add_flag("--quiet", a.quiet);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", a.ckpt)->required();
  ev->add_option("--data", a.data)->required();
  ev->add_option("--split", a.split)->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--report", a.report, "CSV report path");

  auto* pr = app.add_subcommand("predict", "Answer a question about an image");
  pr->add_option("--ckpt", a.ckpt)->required();
  pr->add_option("--image", a.image)->required();
  pr->add_option("--question", a.question)->required();

  auto* at = app.add_subcommand("attn", "Dump per-module attention maps");
  at->add_option("--ckpt", a.ckpt)->required();
  at->add_option("--image", a.image)->required();
  at->add_option("--query", a.query)->required();
  at->add_option("--out", a.out)->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  gc->add_option("--op", a.op)->check(CLI::IsMember(nmn::grad_check_names()));

  auto* st = app.add_subcommand("stats", "Layout statistics of a dataset (TSV)");
  st->add_option("--data", a.data)->required();

  auto* qu = app.add_subcommand("query", "Evaluate an explicit module expression");
  qu->add_option("--ckpt", a.ckpt)->required();
  qu->add_option("--image", a.image)->required();
  qu->add_option("--expr", a.expr)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(a);
    if (*tr) return cmd_train(a);
    if (*ev) return cmd_eval(a);
    if (*pr) return cmd_predict(a);
    if (*at) return cmd_attn(a);
    if (*gc) return cmd_grad_check(a);
    if (*st) return cmd_stats(a);
    if (*qu) return cmd_query(a);
  } catch (const nmn::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const nmn::ParseError& e) {
    std::cerr << "parse error at offset " << e.offset() << ": " << e.what() << "\n";
    return kExitData;
  } catch (const nmn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
