#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dynisp/dynisp.hpp"
#include "support/contracts.hpp"

namespace dynisp {
namespace {

Tensor random_tensor(Shape s, Rng& rng, float sd = 1.0f) {
  std::normal_distribution<float> g(0.0f, sd);
  std::vector<float> v(s.size());
  for (auto& e : v) e = g(rng);
  return Tensor(s, std::move(v));
}

std::vector<Stage> full_order() {
  PipelineConfig p;
  p.inv_tone_map = true;
  p.denoise = true;
  return decode_order(p);
}

Controller make(ControlMode mode, std::uint64_t seed = 2) {
  ControllerConfig cfg;
  cfg.mode = mode;
  cfg.seed = seed;
  return Controller(cfg, full_order(), ParamSpecTable::defaults(full_order(), cfg.filter));
}

TEST(BoundedSigmoid, Examples) {
  const std::vector<ParamSpec> unit{{"u", 0.0, 1.0}};
  // mpmath: 1 / (1 + e^-2) = 0.880797077977882
  EXPECT_NEAR(bounded_sigmoid(Tensor::scalar(2.0f), unit).item(), 0.880797077977882, 1e-6);
  EXPECT_EQ(bounded_sigmoid(Tensor::scalar(0.0f), unit).item(), 0.5f);
  const std::vector<ParamSpec> wide{{"w", -3.0, 7.0}};
  const float top = bounded_sigmoid(Tensor::scalar(30.0f), wide).item();
  EXPECT_NEAR(top, 7.0, 1e-6);
  EXPECT_LT(top, 7.0f);
  const float bottom = bounded_sigmoid(Tensor::scalar(-200.0f), wide).item();
  EXPECT_GT(bottom, -3.0f);
  EXPECT_THROW(bounded_sigmoid(Tensor(Shape{1, 2, 1, 1}), unit), std::invalid_argument);
}

TEST(Controller, ZeroDecoderGivesMidpoints) {
  auto c = make(ControlMode::global);
  for (auto& l : c.layers()) {
    for (auto& e : l.dec_w.mutable_values()) e = 0.0f;
    for (auto& e : l.bias.mutable_values()) e = 0.0f;
  }
  Rng rng(1);
  const auto p = c.control(random_tensor({2, 96, 28, 28}, rng));
  for (const auto& l : c.layers()) {
    const auto& t = p.at(l.stage);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < l.specs.size(); ++k)
        EXPECT_FLOAT_EQ(t(n, k), static_cast<float>(0.5 * (l.specs[k].min + l.specs[k].max))) << l.specs[k].name;
  }
}

TEST(Controller, ArityPerStage) {
  const auto c = make(ControlMode::global);
  for (const auto& l : c.layers()) {
    const std::size_t expect = l.stage == Stage::filter ? 12 * 3 * 3 : 9;
    EXPECT_EQ(l.specs.size(), expect) << stage_name(l.stage);
    EXPECT_EQ(l.dec_w.shape().n, expect);
  }
  EXPECT_EQ(c.layers().back().stage, Stage::filter);
}

TEST(Controller, SpecCountMismatchIsAnError) {
  auto c = make(ControlMode::global);
  EXPECT_THROW(c.layers()[0].set_specs(default_stage_specs(Stage::filter)), std::invalid_argument);
  ControllerConfig bad;
  bad.virtual_seq = 7;
  EXPECT_THROW(Controller(bad, full_order()), std::invalid_argument);
}

TEST(Controller, IdenticalFeaturesGiveIdenticalParameters) {
  const auto c = make(ControlMode::global);
  Rng rng(2);
  const auto f = random_tensor({1, 96, 28, 28}, rng);
  auto twice = concat_batch<float>({f, f});
  const auto p = c.control(twice);
  for (const auto& [stage, t] : p) {
    const std::size_t k = t.shape().c;
    for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(t(0, j), t(1, j));
  }
}

TEST(Controller, DecodedParametersInsideBoundsForRandomFeatures) {
  const auto c = make(ControlMode::global);
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto p = c.control(random_tensor({1, 96, 2, 2}, rng, 20.0f));
    for (const auto& l : c.layers()) {
      const auto v = p.at(l.stage).values();
      for (std::size_t k = 0; k < v.size(); ++k) {
        ASSERT_GT(v[k], static_cast<float>(l.specs[k].min));
        ASSERT_LT(v[k], static_cast<float>(l.specs[k].max));
      }
    }
  }
}

TEST(Controller, LocalModeEmitsCoarseMaps) {
  const auto c = make(ControlMode::local);
  EXPECT_EQ(c.config().emb_dim(), 12u);
  Rng rng(4);
  const auto p = c.control(random_tensor({2, 96, 28, 28}, rng));
  EXPECT_EQ(p.at(Stage::gain).shape(), (Shape{2, 9, 28, 28}));
  EXPECT_EQ(p.at(Stage::filter).shape(), (Shape{2, 108, 28, 28}));
  const auto up = fit_params(p.at(Stage::gain), 100, 90);
  const auto specs = default_stage_specs(Stage::gain);
  for (std::size_t k = 0; k < 9; ++k)
    for (std::size_t i = 0; i < 100 * 90; ++i) {
      const float v = up.values()[k * 9000 + i];
      ASSERT_TRUE(v > specs[k].min && v < specs[k].max);
    }
}

TEST(Controller, ZeroKeyScalesLatentByExactlyTwoAndAHalf) {
  auto c = make(ControlMode::global);
  auto& l = c.layer(Stage::gain);
  for (auto& e : l.key_w2.mutable_values()) e = 0.0f;
  for (auto& e : l.key_b2.mutable_values()) e = 0.0f;
  Rng rng(5);
  const auto v = random_tensor({3, 256, 1, 1}, rng);
  const auto next = c.update_state(v, c.decode_params(v, l), l);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(next.values()[i], v.values()[i] * 2.5f);
}

TEST(Controller, AttentionStaysWithinGroups) {
  const auto c = make(ControlMode::global);
  const auto& l = c.layers()[1];
  Rng rng(6);
  const auto v = random_tensor({1, 256, 1, 1}, rng);
  const auto p = c.decode_params(v, l);
  const auto gates = c.attention_gates(v, p, l);
  // Permute the channels of group 3 (channels 96..127) only.
  Tensor w = v.detach();
  std::reverse(w.mutable_values().begin() + 96, w.mutable_values().begin() + 128);
  const auto moved = c.attention_gates(w, p, l);
  for (std::size_t i = 0; i < 256; ++i) {
    if (i >= 96 && i < 128) continue;
    EXPECT_EQ(moved.values()[i], gates.values()[i]) << i;
  }
}

TEST(Controller, Contracts) {
  const auto r = testing::controller_contracts(100, 7);
  EXPECT_TRUE(r.ok()) << r.summary();
}

TEST(Controller, LocalMatchesGlobalOnConstantFeatures) {
  const auto r = testing::local_global_consistency(48, 64, 2, 8);
  EXPECT_TRUE(r.ok()) << r.summary();
}

TEST(Model, GradientsReachEncoderThroughControlAndPipeline) {
  for (const auto mode : {ControlMode::global, ControlMode::local}) {
    ModelConfig mc;
    mc.encoder.input_size = 32;
    mc.controller.mode = mode;
    mc.pipeline.denoise = true;
    Model m(mc, ParamSpecTable::defaults(mc.pipeline.stages(), mc.denoiser.filter()));
    Rng rng(9);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> xv(3 * 40 * 40), yv(3 * 40 * 40);
    for (auto& e : xv) e = u(rng);
    for (auto& e : yv) e = u(rng);
    Tape tape;
    Tape::Scope scope(tape);
    const auto r = m.forward(Tensor(Shape{1, 3, 40, 40}, xv));
    tape.backward(mse(r.output, Tensor(Shape{1, 3, 40, 40}, yv)));
    std::size_t zero_tensors = 0, tensors = 0;
    m.visit([&](const std::string& name, Tensor& t) {
      if (name.rfind("encoder.", 0) != 0) return;
      ++tensors;
      const auto g = t.grad();
      if (std::all_of(g.begin(), g.end(), [](float x) { return x == 0.0f; })) ++zero_tensors;
    });
    EXPECT_EQ(zero_tensors, 0u) << mode_name(mode) << ": of " << tensors;
  }
}

}  // namespace
}  // namespace dynisp
