// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "maskse/error.h"
#include "maskse/trainer.h"
#include "testing.h"

using namespace maskse;
using namespace maskse::trainer;

namespace {

struct Fixture {
  Fixture() {
    testing::QuietLogs();
    manifest = testing::SyntheticCorpus(dir.str(), 2, 0.12);
    corpus = LoadCorpus(manifest);
    cfg = TrainConfig::Desk();
    cfg.seed = 11;
    cfg.crop_frames = 8;
  }
  TrainState Fresh() const { return TrainState::Create(cfg, FitNorm(corpus)); }

  testing::TempDir dir;
  datastore::CorpusManifest manifest;
  Corpus corpus;
  TrainConfig cfg;
};

std::vector<LabeledAudio> ProxyLabels(const Corpus& c) {
  std::vector<LabeledAudio> out;
  for (const auto& u : c.utterances)
    out.push_back({u.id, u.wave, ProxyMos(u.spec, c.CleanReference(u)->spec)});
  return out;
}

}  // namespace

TEST_CASE("variant names") {
  CHECK(ParseVariant("noMA") == Variant::kNoMA);
  CHECK(std::string(VariantName(Variant::kNoM)) == "noM");
  CHECK_THROWS_AS(ParseVariant("nope"), InvalidInput);
}

TEST_CASE("config overrides") {
  TrainConfig c;
  c.Apply(KeyValueConfig::Parse(
      "desk = true\nlr = 0.001\niterations = 7\niterations_phase2 = 3\nvariant = noM\n"
      "adversarial = bce\nlambda2 = 10\n"));
  CHECK(c.adam.lr == 0.001);
  CHECK(c.iterations_phase1 == 7);
  CHECK(c.iterations_phase2 == 3);
  CHECK(c.variant == Variant::kNoM);
  CHECK(c.adversarial == losses::AdversarialForm::kBce);
  CHECK(c.weights.lambda2 == 10);
  CHECK(c.crop_frames == 32);
  CHECK(TrainConfig::FromJson(c.ToJson()).ToJson() == c.ToJson());
  TrainConfig bad;
  CHECK_THROWS_AS(bad.Apply(KeyValueConfig::Parse("lr = -1\n")), ConfigError);
}

TEST_CASE("schedules") {
  TrainConfig c;
  CHECK(Schedule(c) == std::vector<int>{1, 2, 3, 2, 3});
  c.variant = Variant::kNoM;
  CHECK(Schedule(c) == std::vector<int>{1});
  c.variant = Variant::kNoMA;
  CHECK(Schedule(c) == std::vector<int>{1});
}

TEST_CASE("ablations drop parameters") {
  Fixture f;
  auto full = f.Fresh();
  CHECK(full.HasPredictor());
  auto cfg = f.cfg;
  cfg.variant = Variant::kNoM;
  CHECK_FALSE(TrainState::Create(cfg, full.norm).HasPredictor());
  cfg.variant = Variant::kNoMA;
  cfg.generator.attention = false;
  auto noma = TrainState::Create(cfg, full.norm);
  CHECK(noma.gen.ParameterCount() < full.gen.ParameterCount());
  // The variant decides attention, whatever the generator config says.
  cfg.generator.attention = true;
  CHECK(TrainState::Create(cfg, full.norm).gen.ParameterCount() == noma.gen.ParameterCount());
}

TEST_CASE("corpus helpers") {
  Fixture f;
  CHECK(f.corpus.utterances.size() == 8);
  CHECK(f.corpus.HasAllConditions());
  const auto* u = f.corpus.Find("plastic/spk1/s1");
  REQUIRE(u != nullptr);
  CHECK(f.corpus.CleanReference(*u)->id == "clean/spk1/s1");
  CHECK(ProxyMos(u->spec, u->spec) == 5.0);
  CHECK(ProxyMos(u->spec, f.corpus.CleanReference(*u)->spec) < 5.0);
}

TEST_CASE("training is deterministic in the seed") {
  Fixture f;
  auto a = f.Fresh(), b = f.Fresh();
  TrainLog la, lb;
  RunPhase1(a, f.corpus, 3, &la);
  RunPhase1(b, f.corpus, 3, &lb);
  CHECK(a.gen.params().ValuesEqual(b.gen.params()));
  CHECK(a.critic.params().ValuesEqual(b.critic.params()));
  for (int i = 0; i < 3; ++i) CHECK(TrainLog::Format(la.rows()[i]) == TrainLog::Format(lb.rows()[i]));
}

TEST_CASE("resuming from a checkpoint continues identically") {
  Fixture f;
  auto straight = f.Fresh();
  RunPhase1(straight, f.corpus, 4, nullptr);

  auto first = f.Fresh();
  RunPhase1(first, f.corpus, 2, nullptr);
  checkpoint::Save(first.ToCheckpoint(), f.dir.str("mid.ckpt"));
  auto resumed = TrainState::FromCheckpoint(checkpoint::Load(f.dir.str("mid.ckpt")));
  RunPhase1(resumed, f.corpus, 2, nullptr);
  CHECK(resumed.iteration == straight.iteration);
  CHECK(resumed.gen.params().ValuesEqual(straight.gen.params()));
  CHECK(resumed.critic.params().ValuesEqual(straight.critic.params()));
}

TEST_CASE("phase 1 log rows") {
  Fixture f;
  auto s = f.Fresh();
  std::ostringstream sink;
  TrainLog log(&sink);
  RunPhase1(s, f.corpus, 2, &log);
  REQUIRE(log.rows().size() == 2);
  const auto& r = log.rows()[0];
  CHECK(r.phase == 1);
  REQUIRE(r.totals.has_value());
  CHECK(r.totals->total_g == doctest::Approx(losses::Compose(r.report, f.cfg.weights).total_g));
  CHECK(r.totals->total_hl == r.totals->total_g);
  CHECK(sink.str().rfind(TrainLog::Header(), 0) == 0);
}

TEST_CASE("frozen predictor degenerate cases") {
  Fixture f;
  auto labels = ProxyLabels(f.corpus);
  {
    auto s = f.Fresh();
    const auto before = s.mqss->params().Clone();
    ConstantPredictor five(5.0);
    TrainLog log;
    RunPhase3(s, f.corpus, labels, 2, &log, &five);
    for (const auto& r : log.rows()) {
      CHECK(r.report.Get("mos") == 0.0);
      CHECK(std::abs(r.totals->total_hl - r.totals->total_g) <= 1e-9);
    }
    CHECK(s.mqss->params().ValuesEqual(before));
  }
  {
    auto s = f.Fresh();
    ConstantPredictor one(1.0);
    TrainLog log;
    RunPhase3(s, f.corpus, labels, 2, &log, &one);
    for (const auto& r : log.rows()) {
      CHECK(r.report.Get("mos") == 4.0);
      CHECK(std::abs(r.totals->total_hl - r.totals->total_g - 4.0) <= 1e-12);
    }
  }
}

TEST_CASE("phase 2 fits labels") {
  Fixture f;
  auto s = f.Fresh();
  auto labels = ProxyLabels(f.corpus);
  labels.resize(2);
  TrainLog log;
  const double err = RunPhase2(s, labels, 20, &log);
  CHECK(log.rows().size() == 20);
  CHECK(err < std::abs(labels[1].label - 3.0) + 1.0);
  CHECK_THROWS_AS(RunPhase2(s, {}, 1, nullptr), ConfigError);
}

TEST_CASE("phase 3 with the learned predictor updates it") {
  Fixture f;
  auto s = f.Fresh();
  const auto before = s.mqss->params().Clone();
  TrainLog log;
  RunPhase3(s, f.corpus, ProxyLabels(f.corpus), 1, &log);
  REQUIRE(log.rows().size() == 1);
  CHECK(log.rows()[0].report.values.count("mos"));
  CHECK_FALSE(s.mqss->params().ValuesEqual(before));
}

TEST_CASE("ratings become labels") {
  Fixture f;
  std::vector<datastore::Rating> rs{{"n95/spk0/s0", "a", 2, 0, "a"},
                                    {"n95/spk0/s0", "b", 3, 0, "b"},
                                    {"clean/spk0/s0", "a", 5, 0, "a"}};
  auto labels = LabelsFromRatings(rs, f.manifest);
  REQUIRE(labels.size() == 2);
  for (const auto& l : labels)
    CHECK(l.label == (l.id == "n95/spk0/s0" ? 2.5 : 5.0));
  CHECK_THROWS_AS(LabelsFromRatings({}, f.manifest), ConfigError);
}

TEST_CASE("synthetic rater covers clean, masked and enhanced audio") {
  Fixture f;
  auto s = f.Fresh();
  SyntheticRater rater;
  auto labels = rater.Collect(s, f.corpus);
  int enhanced = 0;
  for (const auto& l : labels) {
    CHECK((l.label >= 1.0 && l.label <= 5.0));
    enhanced += l.id.rfind("enhanced:", 0) == 0;
  }
  CHECK(enhanced == 6);
  CHECK(labels.size() == 14);
}

TEST_CASE("protocol writes stage checkpoints and resumes") {
  Fixture f;
  f.cfg.iterations_phase1 = 1;
  f.cfg.iterations_phase2 = 1;
  f.cfg.iterations_phase3 = 1;
  f.cfg.rounds = 1;
  auto s = f.Fresh();
  SyntheticRater rater;
  const auto out = f.dir.str("run");
  auto r = RunProtocol(s, f.corpus, rater, out, nullptr);
  CHECK(r.phases == std::vector<int>{1, 2, 3});
  REQUIRE(r.checkpoints.size() == 3);
  for (const auto& p : r.checkpoints) CHECK(std::filesystem::exists(p));

  // A second call finds everything done and reports the existing stages.
  auto again = f.Fresh();
  auto r2 = RunProtocol(again, f.corpus, rater, out, nullptr);
  CHECK(r2.checkpoints == r.checkpoints);
  CHECK(again.phases == std::vector<int>{1, 2, 3});

  f.cfg.variant = Variant::kNoM;
  auto nom = f.Fresh();
  auto r3 = RunProtocol(nom, f.corpus, rater, f.dir.str("nom"), nullptr);
  CHECK(r3.phases == std::vector<int>{1});
}

TEST_CASE("enhance keeps the length and loads from a checkpoint") {
  Fixture f;
  auto s = f.Fresh();
  const auto& w = f.corpus.utterances[1].wave;
  auto y = Enhance(s.gen, s.norm, w);
  CHECK(y.size() >= w.size() - signal::kHop);
  auto ck = s.ToCheckpoint();
  auto bundle = LoadGenerator(ck);
  CHECK(Enhance(*bundle.gen, bundle.norm, w).samples == y.samples);
  CHECK(LoadMaskQss(ck)->params().ValuesEqual(s.mqss->params()));
}

TEST_CASE("short utterances are rejected") {
  testing::TempDir dir;
  auto m = testing::SyntheticCorpus(dir.str(), 1, 0.02);
  CHECK_THROWS_AS(LoadCorpus(m), InvalidInput);
}
