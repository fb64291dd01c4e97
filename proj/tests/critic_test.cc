// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <random>

#include "maskse/critic.h"
#include "maskse/error.h"
#include "maskse/losses.h"
#include "maskse/nn/ops.h"
#include "testing.h"

using namespace maskse;
using namespace maskse::critic;
using nn::Tensor;

namespace {

Tensor RandomInput(int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(static_cast<std::size_t>(frames) * 257);
  for (auto& x : v) x = g(rng);
  return Tensor::FromData({frames, 257}, v);
}

}  // namespace

TEST_CASE("trunk geometry") {
  Config cfg;
  CHECK(cfg.TrunkBins() == 65);
  Critic c(Config::Desk());
  c.Init(1);
  CHECK(c.params().Count() == 9357);
  auto out = c.Forward(RandomInput(10, 1));
  CHECK(out.trunk.shape() == nn::Shape{16, 3, 65});
  CHECK(out.frame_logits.shape() == nn::Shape{4, 3});
  CHECK(out.class_logits.shape() == nn::Shape{4});
  CHECK(out.frame_real.shape() == nn::Shape{3});
}

TEST_CASE("class logits are the frame mean of frame logits") {
  Critic c(Config::Desk());
  c.Init(2);
  auto out = c.Forward(RandomInput(17, 2));
  const int frames = out.frame_logits.dim(1);
  for (int k = 0; k < 4; ++k) {
    double acc = 0;
    for (int t = 0; t < frames; ++t) acc += out.frame_logits.at(k * frames + t);
    CHECK(out.class_logits.at(k) == doctest::Approx(acc / frames).epsilon(1e-12));
  }
  double real = 0;
  for (int t = 0; t < frames; ++t) real += out.frame_real.at(t);
  CHECK(out.realness.item() == doctest::Approx(real / frames).epsilon(1e-12));
}

TEST_CASE("zero heads give an undecided critic") {
  Critic c(Config::Desk());
  c.Init(3);
  for (const char* name : {"cls.w", "cls.b", "adv.w", "adv.b"}) {
    Tensor t = c.params().Get(name);
    nn::Fill(t, 0.0);
  }
  auto z = RandomInput(9, 4);
  CHECK(c.Forward(z).realness.item() == doctest::Approx(0.5).epsilon(1e-15));
  auto p = c.ClassProbabilities(z);
  for (int k = 0; k < 4; ++k) CHECK(p.at(k) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("critic loss gradients") {
  Critic c(Config::Desk());
  c.Init(5);
  auto real = RandomInput(8, 6), fake = RandomInput(8, 7);
  auto loss = [&] {
    auto adv = losses::AdversarialCritic({c.Forward(real).realness}, {c.Forward(fake).realness});
    auto cls = losses::Classification({c.ClassProbabilities(real)}, {Condition::kN95});
    return losses::TotalCritic(adv, cls, {});
  };
  CHECK(testing::SliceGradCheck(c.params(), loss, 30, 1) < 1e-3);
}

TEST_CASE("invalid input") {
  Critic c(Config::Desk());
  CHECK_THROWS_AS(c.Forward(Tensor::Zeros({4, 256})), InvalidInput);
  Config bad;
  bad.strides = {1, 2};
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
}
