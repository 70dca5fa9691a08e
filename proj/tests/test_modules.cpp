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

#include <random>

#include "nmn/layout.hpp"
#include "nmn/network.hpp"

namespace nmn {
namespace {

using T = double;

ModuleConfig small_config() {
  ModuleConfig c;
  c.feature_channels = 4;
  c.att_h = c.att_w = 3;
  c.transform_hidden = 5;
  c.d_ans = 2;
  return c;
}

Tensor<T> random_tensor(const Shape& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<T> u(-1, 1);
  Tensor<T> t(dims);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

void zero_all(ParameterStore<T>& s) {
  for (auto& [n, p] : s) p.value.fill(0);
}

TEST(ModuleKey, RendersAndValidates) {
  EXPECT_EQ(ModuleKey(ModuleType::kFind, "red").str(), "find[red]");
  EXPECT_EQ(ModuleKey(ModuleType::kTransform, "left_of").str(), "transform[left_of]");
  EXPECT_EQ(ModuleKey(ModuleType::kTransform, "next-to").str(), "transform[next-to]");
  EXPECT_THROW(ModuleKey(ModuleType::kFind, ""), ContractError);
  EXPECT_THROW(ModuleKey(ModuleType::kFind, "Red"), ContractError);
  EXPECT_THROW(ModuleKey(ModuleType::kFind, "9lives"), ContractError);
  EXPECT_EQ(*parse_module_type("measure"), ModuleType::kMeasure);
  EXPECT_FALSE(parse_module_type("lookup").has_value());
}

TEST(Find, ZeroFeaturesGiveConstantBias) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Tape<T> tape;
  find_forward(tape, store, cfg, "red", tape.constant(random_tensor({3, 3, 4}, 1)));
  store.get("find.red.conv.bias").value[0] = 0.75;
  Tape<T> fresh;  // a tape snapshots parameter values on first use
  auto att = find_forward(fresh, store, cfg, "red", fresh.constant(Tensor<T>({3, 3, 4})));
  EXPECT_EQ(att.dims(), (Shape{3, 3}));
  for (T v : att.value().data()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(Find, RepeatedCallsShareWeights) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Tape<T> tape;
  auto f = tape.constant(random_tensor({3, 3, 4}, 2));
  find_forward(tape, store, cfg, "red", f);
  const Parameter<T>* first = &store.get("find.red.conv.weight");
  find_forward(tape, store, cfg, "red", f);
  EXPECT_EQ(first, &store.get("find.red.conv.weight"));
  EXPECT_EQ(store.size(), 2u);
  find_forward(tape, store, cfg, "blue", f);
  EXPECT_EQ(store.size(), 4u);
  EXPECT_THROW(find_forward(tape, store, cfg, "red", tape.constant(Tensor<T>({3, 3, 5}))),
               ShapeError);
}

TEST(Transform, ShapeAndZeroWeights) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Tape<T> tape;
  auto a = tape.constant(random_tensor({3, 3}, 3));
  auto out = transform_forward(tape, store, cfg, "above", a);
  EXPECT_EQ(out.dims(), a.dims());
  zero_all(store);
  Tape<T> fresh;
  auto z = transform_forward(fresh, store, cfg, "above", fresh.constant(a.value()));
  for (T v : z.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(transform_forward(tape, store, cfg, "above", tape.constant(Tensor<T>({3, 4}))),
               ShapeError);
}

TEST(Combine, UnitWeightsSumNonnegativeMaps) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Tape<T> tape;
  Tensor<T> a({3, 3}), b({3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    a[i] = 0.1 * i;
    b[i] = 1.0 - 0.05 * i;
  }
  combine_forward(tape, store, cfg, "and", tape.constant(a), tape.constant(b));
  store.get("combine.and.conv.weight").value.fill(1.0);
  store.get("combine.and.conv.bias").value.fill(0.0);
  Tape<T> fresh;
  auto out = combine_forward(fresh, store, cfg, "and", fresh.constant(a), fresh.constant(b));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(out.value()[i], a[i] + b[i], 1e-15);
  auto again = combine_forward(fresh, store, cfg, "and", fresh.constant(a), fresh.constant(b));
  EXPECT_EQ(out.value(), again.value());
}

TEST(Combine, InitialWeightsAreNonnegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParameterStore<T> store(seed);
    Tape<T> tape;
    const auto cfg = small_config();
    auto a = tape.constant(random_tensor({3, 3}, seed));
    combine_forward(tape, store, cfg, "and", a, a);
    for (T w : store.get("combine.and.conv.weight").value.data()) EXPECT_GE(w, 0.0);
  }
}

TEST(Describe, ZeroWeightsReturnBiasAndUniformMatchesMean) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Tape<T> tape;
  const auto feats = random_tensor({3, 3, 4}, 4);
  auto f = tape.constant(feats);
  auto out = describe_forward(tape, store, cfg, "color", f, tape.constant(random_tensor({3, 3}, 5)));
  EXPECT_EQ(out.value().size(), cfg.d_ans);

  // Uniform attention: FC applied to the plain spatial mean.
  auto uni = describe_forward(tape, store, cfg, "color", f, tape.constant(Tensor<T>({3, 3}, 2.0)));
  const auto& w = store.get("describe.color.fc.weight").value;
  for (std::size_t j = 0; j < cfg.d_ans; ++j) {
    double want = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      double mean = 0;
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) mean += feats.at(y, x, c) / 9.0;
      want += mean * w[c * cfg.d_ans + j];
    }
    EXPECT_NEAR(uni.value()[j], want, 1e-12);
  }

  store.get("describe.color.fc.weight").value.fill(0);
  auto& bias = store.get("describe.color.fc.bias").value;
  bias[0] = 1.5;
  bias[1] = -2;
  Tape<T> fresh;
  auto z = describe_forward(fresh, store, cfg, "color", fresh.constant(feats),
                            fresh.constant(random_tensor({3, 3}, 6)));
  EXPECT_EQ(z.value()[0], 1.5);
  EXPECT_EQ(z.value()[1], -2.0);
}

TEST(Measure, LengthAndMagnitudeSensitivity) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Tape<T> tape;
  const auto a = random_tensor({3, 3}, 7);
  auto out = measure_forward(tape, store, cfg, "is", tape.constant(a));
  EXPECT_EQ(out.value().size(), cfg.d_ans);
  Tensor<T> doubled = a;
  for (auto& v : doubled.data()) v *= 2;
  auto out2 = measure_forward(tape, store, cfg, "is", tape.constant(doubled));
  EXPECT_NE(out.value(), out2.value());
}

TEST(Init, DeterministicZeroBiasAndCentered) {
  ParameterStore<T> a(42), b(42), c(43);
  auto& wa = a.get_or_create("find.red.conv.weight", {1, 1, 64, 1}, Init::kGlorotUniform);
  // Creation order must not matter.
  b.get_or_create("find.blue.conv.weight", {1, 1, 64, 1}, Init::kGlorotUniform);
  auto& wb = b.get_or_create("find.red.conv.weight", {1, 1, 64, 1}, Init::kGlorotUniform);
  auto& wc = c.get_or_create("find.red.conv.weight", {1, 1, 64, 1}, Init::kGlorotUniform);
  EXPECT_EQ(wa.value, wb.value);
  EXPECT_NE(wa.value, wc.value);
  auto& bias = a.get_or_create("find.red.conv.bias", {1}, default_init("bias"));
  EXPECT_EQ(bias.value[0], 0.0);

  auto& big = a.get_or_create("transform.above.fc1.weight", {100, 100}, Init::kGlorotUniform);
  double mean = 0, bound = std::sqrt(6.0 / 200.0);
  for (T v : big.value.data()) {
    mean += v;
    EXPECT_LE(std::abs(v), bound);
  }
  EXPECT_NEAR(mean / 1e4, 0.0, 0.01);
  EXPECT_THROW(a.get_or_create("find.red.conv.weight", {1, 1, 32, 1}, Init::kGlorotUniform),
               ShapeError);
}

TEST(Init, StateTensorsShareDims) {
  ParameterStore<T> s(1);
  auto& p = s.get_or_create("measure.is.fc.weight", {81, 2}, Init::kGlorotUniform);
  EXPECT_EQ(p.grad.dims(), p.value.dims());
  EXPECT_EQ(p.sq_grad.dims(), p.value.dims());
  EXPECT_EQ(p.sq_delta.dims(), p.value.dims());
}

TEST(Network, TypeSignaturesAreEnforced) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  // Attention into find's image slot.
  EXPECT_THROW(Network<T>(parse_module_expression("measure[is](find[red](find[blue]))"), store, cfg),
               AssemblyError);
  // Label into an Attention slot.
  EXPECT_THROW(Network<T>(parse_module_expression("measure[is](measure[is](find[red]))"), store,
                          cfg),
               AssemblyError);
  // Arity.
  EXPECT_THROW(Network<T>(parse_module_expression("measure[is](combine[and](find[red]))"), store,
                          cfg),
               AssemblyError);
  // Root must produce a label.
  EXPECT_THROW(Network<T>(parse_module_expression("find[red]"), store, cfg), AssemblyError);
  EXPECT_EQ(store.size(), 0u);
}

TEST(Network, RequireExistingRejectsUntrainedModules) {
  ParameterStore<T> store(1);
  const auto cfg = small_config();
  Network<T>(parse_module_expression("measure[is](find[red])"), store, cfg);
  EXPECT_NO_THROW(Network<T>(parse_module_expression("measure[is](find[red])"), store, cfg,
                             ParamPolicy::kRequireExisting));
  EXPECT_THROW(Network<T>(parse_module_expression("measure[is](find[green])"), store, cfg,
                          ParamPolicy::kRequireExisting),
               DataError);
}

TEST(Network, TypeLevelSharing) {
  ParameterStore<T> store(1);
  auto cfg = small_config();
  cfg.share_type_level = true;
  Network<T>(parse_module_expression("measure[is](combine[and](find[red],find[blue]))"), store, cfg);
  EXPECT_TRUE(store.contains("find.shared.conv.weight"));
  EXPECT_FALSE(store.contains("find.red.conv.weight"));
  EXPECT_EQ(store.size(), 6u);
}

TEST(Tying, GradientSumsOverUsesOfTheInstance) {
  // describe[color](find[cat]) and describe[where](find[truck]) in one
  // batch; find.cat gets exactly the gradient of the examples using it.
  auto cfg = small_config();
  const auto l1 = layout_from_query(parse_query("color(cat)"), Domain::kVqa);
  const auto l2 = layout_from_query(parse_query("where(truck)"), Domain::kVqa);
  ASSERT_EQ(l1.str(), "describe[color](find[cat])");
  ASSERT_EQ(l1.shape(), l2.shape());
  const std::vector<Tensor<T>> feats = {random_tensor({3, 3, 4}, 10), random_tensor({3, 3, 4}, 11),
                                        random_tensor({3, 3, 4}, 12)};
  const std::vector<const Layout*> batch = {&l1, &l2, &l1};
  auto loss_of = [&](Tape<T>& tape, ParameterStore<T>& s, std::size_t i) {
    Network<T> net(*batch[i], s, cfg);
    return nll_loss(softmax(net(tape, tape.constant(feats[i]))), i % 2);
  };

  ParameterStore<T> joint(5);
  {
    Tape<T> tape;
    std::vector<Var<T>> ls;
    for (std::size_t i = 0; i < 3; ++i) ls.push_back(loss_of(tape, joint, i));
    tape.backward(add_n(ls));
  }
  ParameterStore<T> seq(5);
  std::vector<T> cat_sum(4, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    Tape<T> tape;
    tape.backward(loss_of(tape, seq, i));
    if (batch[i] == &l1) {
      auto g = seq.get("find.cat.conv.weight").grad.data();
      for (std::size_t k = 0; k < 4; ++k) cat_sum[k] += g[k];
    }
    seq.zero_grad();
  }
  const auto& g = joint.get("find.cat.conv.weight").grad;
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g[k], cat_sum[k], 1e-12);
  // The truck example never touches find.cat, and vice versa.
  {
    ParameterStore<T> only_truck(5);
    Tape<T> tape;
    Network<T> warm(l1, only_truck, cfg);
    tape.backward(loss_of(tape, only_truck, 1));
    EXPECT_FALSE(only_truck.get("find.cat.conv.weight").touched);
    for (T v : only_truck.get("find.cat.conv.weight").grad.data()) EXPECT_EQ(v, 0.0);
  }
}

}  // namespace
}  // namespace nmn
