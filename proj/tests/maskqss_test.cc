// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include "maskse/error.h"
#include "maskse/maskqss.h"
#include "maskse/masksim.h"
#include "maskse/nn/ops.h"
#include "testing.h"

using namespace maskse;
using namespace maskse::maskqss;
using nn::Tensor;

TEST_CASE("conv stack layout") {
  auto s = DefaultConvStack();
  REQUIRE(s.size() == 9);
  const std::vector<int> channels{16, 16, 16, 32, 32, 64, 64, 128, 128};
  for (int i = 0; i < 9; ++i) {
    CHECK(s[i].channels == channels[i]);
    CHECK(s[i].kernel == 3);
    CHECK(s[i].stride_time == 1);
    CHECK(s[i].stride_freq == ((i == 2 || i == 4 || i == 6 || i == 8) ? 3 : 1));
  }
  CHECK(StackWidths(s, 512).back() == 7);
  CHECK(StackWidths(s, 48).back() == 1);
}

TEST_CASE("fused width and trace shapes") {
  Config cfg;
  CHECK(cfg.FusedWidth() == 896);
  MaskQss m(cfg);
  m.Init(1);
  auto f = m.Extract(masksim::SyntheticSpeech(1, 0.1));
  auto tr = m.ForwardTrace(f);
  const int frames = f.frames.dim(0);
  CHECK(frames == signal::FrameCount(1600));
  CHECK(tr.cb2.shape() == nn::Shape{128, frames, 7});
  CHECK(tr.cb1.dim(0) == 128);
  CHECK(tr.cb1.dim(2) == 1);
  CHECK(tr.fused.shape() == nn::Shape{frames, 896});
  CHECK(tr.frame_scores.shape() == nn::Shape{frames, 1});
}

TEST_CASE("utterance score is the mean of frame scores") {
  MaskQss m;
  m.Init(2);
  auto est = m.Predict(masksim::SyntheticSpeech(2, 0.12));
  REQUIRE(!est.frame_scores.empty());
  double acc = 0;
  for (double v : est.frame_scores) acc += v;
  CHECK(est.utterance_score == doctest::Approx(acc / est.frame_scores.size()).epsilon(1e-12));
}

TEST_CASE("waveform path agrees with extracted features") {
  MaskQss m;
  m.Init(3);
  auto w = masksim::SyntheticSpeech(3, 0.08);
  const double a = m.Forward(m.Extract(w)).item();
  const double b = m.ForwardWave(Tensor::FromData({static_cast<int>(w.size())}, w.samples)).score.item();
  CHECK(a == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("too-short audio is rejected") {
  MaskQss m;
  m.Init(4);
  CHECK_THROWS_AS(m.Predict(testing::WhiteNoise(1, 300)), InvalidInput);
}

TEST_CASE("config json round trip") {
  Config c;
  c.projection = 64;
  auto back = Config::FromJson(c.ToJson());
  CHECK(back.projection == 64);
  CHECK(back.conv_stack == c.conv_stack);
  CHECK(back.scatter.log_compress);
}
