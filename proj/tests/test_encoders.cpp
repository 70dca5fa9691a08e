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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nmn/adadelta.hpp"
#include "nmn/encoders.hpp"
#include "nmn/model.hpp"
#include "nmn/network.hpp"
#include "nmn/scene.hpp"

namespace nmn {
namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Image sample_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return render(sample_scene(rng));
}

TEST(ConvFeatures, DefaultStackIsNineByNineBySixtyFour) {
  ParameterStore<float> store(1);
  Tape<float> tape;
  const ConvStackConfig cfg;
  auto f = conv_features(tape, store, cfg, sample_image(1));
  EXPECT_EQ(f.dims(), (Shape{9, 9, 64}));
  EXPECT_EQ(cfg.output_dims(30, 30), (Shape{9, 9, 64}));
  EXPECT_TRUE(f.value().all_finite());
}

TEST(ConvFeatures, BlackImageWithZeroBiasesGivesZeros) {
  ParameterStore<double> store(1);
  Tape<double> tape;
  auto f = conv_features(tape, store, ConvStackConfig{}, Image(30, 30, 3));
  for (double v : f.value().data()) ASSERT_EQ(v, 0.0);
}

TEST(ConvFeatures, PixelsAreScaledToUnitRange) {
  Image img(2, 1, 3);
  img.px(1, 0)[0] = 255;
  img.px(1, 0)[2] = 51;
  const auto t = image_tensor<double>(img);
  EXPECT_EQ(t.dims(), (Shape{1, 2, 3}));
  EXPECT_DOUBLE_EQ(t.at(0, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.at(0, 1, 2), 0.2);
  EXPECT_DOUBLE_EQ(t.at(0, 0, 0), 0.0);
}

TEST(ConvFeatures, ChannelMismatchIsAShapeError) {
  ParameterStore<float> store(1);
  Tape<float> tape;
  EXPECT_THROW(conv_features(tape, store, ConvStackConfig{}, Image(30, 30, 1)), ShapeError);
}

TEST(Vocabulary, ReservedIndicesAndRoundTrip) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.add("red"), 2u);
  EXPECT_EQ(v.add("circle"), 3u);
  EXPECT_EQ(v.add("red"), 2u);
  EXPECT_EQ(v.lookup("blue"), Vocabulary::kUnknown);
  EXPECT_EQ(v.encode({"red", "zebra", "circle"}), (std::vector<std::size_t>{2, 1, 3}));
  const auto back = Vocabulary::from_tsv(v.tsv());
  EXPECT_EQ(back.size(), v.size());
  EXPECT_EQ(back.lookup("circle"), 3u);
  EXPECT_EQ(back.tsv(), v.tsv());
}

TEST(Lstm, ZeroWeightsGiveZeroState) {
  ParameterStore<double> store(1);
  LstmConfig cfg{5, 4, 6};
  store.create("encoder.lstm.cell.weight", {10, 24}, Init::kZeros);
  store.create("encoder.lstm.cell.bias", {24}, Init::kZeros);
  Tape<double> tape;
  auto h = lstm_encode(tape, store, cfg, {2, 3, 4});
  EXPECT_EQ(h.dims(), (Shape{6}));
  for (double v : h.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, OutputLengthAndBoundsForAnyLength) {
  ParameterStore<double> store(3);
  LstmConfig cfg{7, 5, 8};
  for (std::size_t n : {1, 2, 9, 40}) {
    Tape<double> tape;
    std::vector<std::size_t> tokens(n);
    for (std::size_t i = 0; i < n; ++i) tokens[i] = i % 7;
    auto h = lstm_encode(tape, store, cfg, tokens);
    ASSERT_EQ(h.dims(), (Shape{8}));
    for (double v : h.value().data()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
  Tape<double> tape;
  EXPECT_THROW(lstm_encode(tape, store, cfg, {}), ContractError);
}

TEST(Lstm, SingleStepClosedForm) {
  // One hidden unit, one input dim. Gates [i | f | o | g].
  ParameterStore<double> store(1);
  LstmConfig cfg{3, 1, 1};
  store.insert("encoder.lstm.embed.weight", Tensor<double>({3, 1}, {0.0, 0.0, 2.0}));
  // Rows: input feature, previous hidden.
  store.insert("encoder.lstm.cell.weight",
               Tensor<double>({2, 4}, {0.5, -1.0, 0.25, 0.75, 9.0, 9.0, 9.0, 9.0}));
  store.insert("encoder.lstm.cell.bias", Tensor<double>({4}, {0.1, 0.2, -0.3, 0.0}));
  Tape<double> tape;
  auto h = lstm_encode(tape, store, cfg, {2});
  const double x = 2.0;
  const double i = sigmoid_ref(0.5 * x + 0.1);
  const double o = sigmoid_ref(0.25 * x - 0.3);
  const double g = std::tanh(0.75 * x);
  const double c = i * g;  // forget gate multiplies a zero cell
  EXPECT_NEAR(h.value()[0], o * std::tanh(c), 1e-12);
}

TEST(Fusion, SumsToOneAndReducesWithoutQuestion) {
  ParameterStore<double> store(4);
  Tape<double> tape;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  Tensor<double> rep({6}), qh({5});
  for (auto& v : rep.data()) v = n(rng);
  for (auto& v : qh.data()) v = n(rng);
  auto p = fuse_and_classify(tape, store, tape.constant(rep),
                             std::optional<Var<double>>(tape.constant(qh)), 3);
  double sum = 0;
  for (double v : p.value().data()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);

  // Zero question encoding: the FC1 bias is zero, so only FC2(relu(rep)).
  Tape<double> t2;
  auto q0 = fuse_and_classify(t2, store, t2.constant(rep),
                              std::optional<Var<double>>(t2.constant(Tensor<double>({5}))), 3);
  auto ref = softmax(fully_connected(relu(t2.constant(rep)),
                                     t2.param(store.get("fusion.head.fc2.weight")),
                                     t2.param(store.get("fusion.head.fc2.bias"))));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(q0.value()[k], ref.value()[k], 1e-12);

  Tape<double> t3;
  auto plain = fuse_and_classify(t3, store, t3.constant(Tensor<double>({2}, {0.0, std::log(3.0)})),
                                 std::optional<Var<double>>(), 2);
  EXPECT_NEAR(plain.value()[1], 0.75, 1e-12);
  EXPECT_THROW(fuse_and_classify(t3, store, t3.constant(rep), std::optional<Var<double>>(), 2), ShapeError);
}

TEST(Fusion, GradientReachesBothInputs) {
  ParameterStore<double> store(4);
  Tape<double> tape;
  Tensor<double> rep({4}, 0.3), qh({3}, -0.2);
  rep[1] = 0.9;
  qh[2] = 0.7;
  auto r = tape.leaf(rep, true);
  auto q = tape.leaf(qh, true);
  auto p = fuse_and_classify(tape, store, r, std::optional<Var<double>>(q), 2);
  tape.backward(nll_loss(p, 1));
  auto nonzero = [](const Tensor<double>& g) {
    for (double v : g.data())
      if (v != 0) return true;
    return false;
  };
  EXPECT_TRUE(nonzero(tape.grad(r)));
  EXPECT_TRUE(nonzero(tape.grad(q)));
}

TEST(VisLstm, DistributionAndDeterminism) {
  auto run = [] {
    ParameterStore<float> store(9);
    Tape<float> tape;
    LstmConfig lc{6, 8, 16};
    auto p = vis_lstm_baseline(tape, store, ConvStackConfig{},
                               lc, tape.constant(image_tensor<float>(sample_image(4))),
                               {2, 3, 5}, 2);
    return p.value();
  };
  const auto a = run();
  double sum = 0;
  for (float v : a.data()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-6);
  const auto b = run();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(JointTraining, ConvWeightsMoveUnderAnNmnLoss) {
  ModelSpec spec;
  Model<float> model(spec, Vocabulary{});
  const auto ex = make_example(sample_image(8), "is there a red circle?", "is(and(red,circle))", 1,
                               model.vocab());
  Tape<float> tape;
  auto loss = model.batch_loss(tape, {&ex});
  tape.backward(loss);
  const auto first = model.store().get("encoder.lenet.conv0.weight").value;
  const auto second = model.store().get("encoder.lenet.conv2.weight").value;
  adadelta_step(model.store());
  auto moved = [&](const std::string& name, const Tensor<float>& before) {
    const auto& after = model.store().get(name).value;
    for (std::size_t i = 0; i < after.size(); ++i)
      if (after[i] != before[i]) return true;
    return false;
  };
  EXPECT_TRUE(moved("encoder.lenet.conv0.weight", first));
  EXPECT_TRUE(moved("encoder.lenet.conv2.weight", second));
}

}  // namespace
}  // namespace nmn
