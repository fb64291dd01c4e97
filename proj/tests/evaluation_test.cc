// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "maskse/error.h"
#include "maskse/evaluation.h"
#include "maskse/trainer.h"
#include "testing.h"

using namespace maskse;
using namespace maskse::evaluation;

namespace {

double PearsonOracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = a.size();
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    sab += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

// Rank of v[i]: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> RankOracle(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = 1 + less + (equal - 1) / 2.0;
  }
  return r;
}

datastore::PairRecord Rec(const std::string& pair, Condition mask, bool enh,
                          const std::string& subject, bool correct) {
  datastore::PairRecord r;
  r.pair_id = pair;
  r.mask = mask;
  r.enhanced = enh;
  r.subject_id = subject;
  r.correct = correct;
  return r;
}

}  // namespace

TEST_CASE("ranks average ties") {
  CHECK(Ranks({1, 2, 2, 3}) == std::vector<double>{1, 2.5, 2.5, 4});
  CHECK(Ranks({3, 1, 2}) == std::vector<double>{3, 1, 2});
}

TEST_CASE("correlations against definitions") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = g(rng);
      b[i] = 0.5 * a[i] + g(rng);
    }
    CHECK(Pcc(a, b) == doctest::Approx(PearsonOracle(a, b)).epsilon(1e-12));
    CHECK(Srcc(a, b) == doctest::Approx(PearsonOracle(RankOracle(a), RankOracle(b))).epsilon(1e-12));
  }
}

TEST_CASE("spearman is invariant to monotone transforms") {
  std::vector<double> a{0.3, -1.2, 2.5, 0.9, 4.0};
  std::vector<double> b;
  for (double x : a) b.push_back(std::exp(3 * x) + 7);
  CHECK(Srcc(a, b) == doctest::Approx(1.0));
  CHECK(Pcc(a, b) < 1.0);
}

TEST_CASE("degenerate correlations") {
  CHECK_THROWS_AS(Pcc({1, 1, 1}, {1, 2, 3}), UndefinedMetric);
  CHECK_THROWS_AS(Pcc({1, 2}, {1, 2, 3}), InvalidInput);
  CHECK_THROWS_AS(Srcc({1}, {1}), InvalidInput);
}

TEST_CASE("paired accuracy per cell") {
  std::vector<datastore::PairRecord> recs;
  // n95/Enhanced: 5 pairs x 2 subjects, 6 correct.
  int correct = 0;
  for (int p = 0; p < 5; ++p)
    for (const char* s : {"s1", "s2"})
      recs.push_back(Rec("e" + std::to_string(p), Condition::kN95, true, s, correct++ < 6));
  // cotton/Mask: 2 pairs x 1 subject, 1 correct.
  recs.push_back(Rec("m0", Condition::kCotton, false, "s1", true));
  recs.push_back(Rec("m1", Condition::kCotton, false, "s1", false));
  auto cells = PairedAccuracy(recs);
  REQUIRE(cells.size() == 2);
  const auto& e = cells.at({Condition::kN95, true});
  CHECK(e.correct == 6);
  CHECK(e.pairs == 5);
  CHECK(e.subjects == 2);
  CHECK(e.accuracy == 0.6);
  CHECK(cells.at({Condition::kCotton, false}).accuracy == 0.5);
  CHECK(CellName({Condition::kN95, true}) == "n95/Enhanced");
  CHECK(CellName({Condition::kPlastic, false}) == "plastic/Mask");
}

TEST_CASE("report over a small test set") {
  testing::QuietLogs();
  testing::TempDir dir;
  auto manifest = testing::SyntheticCorpus(dir.str(), 1, 0.1);
  auto cfg = trainer::TrainConfig::Desk();
  auto corpus = trainer::LoadCorpus(manifest);
  auto s = trainer::TrainState::Create(cfg, trainer::FitNorm(corpus));
  auto rep = EvaluateModels(s.gen, s.norm, *s.mqss, manifest);
  REQUIRE(rep.rows.size() == 6);
  for (const auto& r : rep.rows) CHECK(r.utterances == 1);
  CHECK(rep.ToTsv().find("n95") != std::string::npos);
  CHECK(rep.ToJson().at("rows").size() == 6);
  CHECK(CountParameters(s.ToCheckpoint()) == s.gen.ParameterCount());
}
