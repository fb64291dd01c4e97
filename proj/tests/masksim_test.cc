// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "maskse/error.h"
#include "maskse/masksim.h"
#include "testing.h"

using namespace maskse;
using namespace maskse::masksim;

namespace {

// Mean periodogram power in bins whose center lies in (lo_hz, hi_hz].
double BandPower(const signal::Waveform& w, double lo_hz, double hi_hz) {
  auto s = signal::Stft(w);
  double acc = 0;
  int n = 0;
  for (int t = 0; t < s.frames; ++t)
    for (int k = 0; k < signal::kBins; ++k) {
      const double f = k * static_cast<double>(signal::kSampleRate) / signal::kWindow;
      if (f <= lo_hz || f > hi_hz) continue;
      acc += std::exp(s.Lps(t, k));
      ++n;
    }
  return acc / n;
}

}  // namespace

TEST_CASE("default profiles validate") {
  auto ps = DefaultProfiles();
  REQUIRE(ps.size() == 3);
  CHECK(ps[0].name() == "n95");
  CHECK(ps[1].name() == "cotton");
  CHECK(ps[2].name() == "plastic");
  for (const auto& p : ps) CHECK_NOTHROW(p.Validate());
  MaskProfile bad;
  bad.stopband_atten_db = -1;
  CHECK_THROWS_AS(bad.Validate(), InvalidInput);
  bad = MaskProfile{};
  bad.condition = Condition::kClean;
  CHECK_THROWS_AS(bad.Validate(), InvalidInput);
}

TEST_CASE("white noise loses the stopband attenuation above the cutoff") {
  auto probe = testing::WhiteNoise(11, 3 * signal::kSampleRate);
  for (const auto& p : DefaultProfiles()) {
    auto y = ApplyMask(probe, p, 5);
    const double lost = 10 * std::log10(BandPower(probe, p.cutoff_hz, 8000) /
                                        BandPower(y, p.cutoff_hz, 8000));
    INFO(p.name(), " lost ", lost, " dB");
    CHECK(lost >= p.stopband_atten_db - 3);
    // The passband below 1 kHz is left alone.
    const double low = 10 * std::log10(BandPower(probe, 100, 900) / BandPower(y, 100, 900));
    CHECK(std::abs(low) < 1.0);
  }
}

TEST_CASE("profile gain tracks the configured shape") {
  MaskProfile p;
  p.cutoff_hz = 5000;
  p.stopband_atten_db = 25;
  p.tilt_db_per_octave = -2;
  CHECK(20 * std::log10(ProfileGain(p, 500)) == doctest::Approx(0).epsilon(0.02));
  // One octave above the reference: the tilt only.
  CHECK(20 * std::log10(ProfileGain(p, 2000)) == doctest::Approx(-2).epsilon(0.05));
  CHECK(20 * std::log10(ProfileGain(p, 7000)) < -24);
}

TEST_CASE("masking is deterministic in the seed") {
  auto w = SyntheticSpeech(3, 0.5);
  const auto plastic = DefaultProfiles()[2];
  auto a = ApplyMask(w, plastic, 42);
  auto b = ApplyMask(w, plastic, 42);
  auto c = ApplyMask(w, plastic, 43);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.size() == w.size());
}

TEST_CASE("a cutoff at nyquist passes audio through") {
  MaskProfile p;
  p.cutoff_hz = 8000;
  p.stopband_atten_db = 20;
  auto w = testing::WhiteNoise(2, 4000);
  auto y = ApplyMask(w, p, 1);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(y.samples[i] == doctest::Approx(w.samples[i]));
}

TEST_CASE("profiles load from config") {
  auto kv = KeyValueConfig::Parse("[n95]\ncutoff_hz = 6500\n[plastic]\nnoise_floor_db = -40\n");
  auto ps = ProfilesFromConfig(kv);
  REQUIRE(ps.size() == 2);
  CHECK(ps[0].cutoff_hz == 6500);
  CHECK(ps[1].noise_floor_db == -40);
  CHECK_THROWS_AS(ProfilesFromConfig(KeyValueConfig::Parse("[leather]\ncutoff_hz = 1\n")),
                  InvalidInput);
}

TEST_CASE("corpus synthesis writes four conditions per clean file") {
  testing::TempDir dir;
  auto m = testing::SyntheticCorpus(dir.str(), 10, 0.1);
  CHECK(m.size() == 40);
  CHECK(m.HasAllConditions());
  for (Condition c : kAllConditions) CHECK(m.WithCondition(c).size() == 10);
  for (const auto& e : m.entries()) CHECK(std::filesystem::exists(e.path));
  const auto* e = m.Find("cotton/spk3/s3");
  REQUIRE(e != nullptr);
  CHECK(e->speaker_id == "spk3");

  // Same inputs, same bytes.
  testing::TempDir again;
  auto m2 = testing::SyntheticCorpus(again.str(), 10, 0.1);
  CHECK(wav::Read(m.Find("plastic/spk1/s1")->path).samples ==
        wav::Read(m2.Find("plastic/spk1/s1")->path).samples);
}

TEST_CASE("unreadable sources are reported and skipped") {
  testing::TempDir dir;
  datastore::CorpusManifest clean;
  datastore::ManifestEntry e;
  e.utterance_id = "clean/x/missing";
  e.path = dir.str("missing.wav");
  e.speaker_id = "x";
  clean.Add(e);
  auto r = SynthesizeCorpus(clean, DefaultProfiles(), 1, dir.str("out"));
  CHECK(r.manifest.empty());
  CHECK(r.errors.size() == 1);
}

TEST_CASE("synthetic speech has energy across the band") {
  auto w = SyntheticSpeech(1, 1.0);
  CHECK(w.size() == 16000u);
  double peak = 0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.5));
  CHECK(BandPower(w, 7000, 8000) > 0);
  CHECK(BandPower(w, 100, 1000) > BandPower(w, 7000, 8000));
}
