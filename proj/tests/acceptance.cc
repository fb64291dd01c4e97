// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `acceptance <name>...` runs a subset; the desk
// training checks share state and run in order.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "maskse/critic.h"
#include "maskse/evaluation.h"
#include "maskse/generator.h"
#include "maskse/losses.h"
#include "maskse/maskqss.h"
#include "maskse/masksim.h"
#include "maskse/nn/ops.h"
#include "maskse/signal.h"
#include "maskse/trainer.h"
#include "testing.h"

using namespace maskse;
using nn::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string Fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- signal

Outcome SignalRoundTrip() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 1e9;
  for (int i = 0; i < 100; ++i) {
    auto w = testing::WhiteNoise(1000 + i, signal::kSampleRate, 0.2);
    auto y = signal::Istft(signal::Stft(w));
    double s = 0, e = 0;
    for (std::size_t n = signal::kWindow; n + signal::kWindow < w.size(); ++n) {
      s += w.samples[n] * w.samples[n];
      e += (w.samples[n] - y.samples[n]) * (w.samples[n] - y.samples[n]);
    }
    worst = std::min(worst, 10 * std::log10(s / e));
  }
  const double dt = Seconds(t0);
  return {worst >= 30 && dt < 10,
          "min interior SNR " + Fmt(worst) + " dB, " + Fmt(dt, 3) + " s"};
}

// ---------------------------------------------------------------- structure

Outcome ShapeConformance() {
  std::vector<std::string> bad;
  auto spec = signal::Stft(testing::WhiteNoise(1, 2000));
  if (spec.lps.size() != static_cast<std::size_t>(spec.frames) * 257 || signal::kBins != 257)
    bad.push_back("lps width");
  const auto stack = maskqss::DefaultConvStack();
  const std::vector<int> channels{16, 16, 16, 32, 32, 64, 64, 128, 128};
  const std::set<int> strided{2, 4, 6, 8};
  bool stack_ok = stack.size() == 9;
  for (std::size_t i = 0; stack_ok && i < 9; ++i)
    stack_ok = stack[i].channels == channels[i] && stack[i].kernel == 3 &&
               stack[i].stride_time == 1 &&
               stack[i].stride_freq == (strided.count(static_cast<int>(i)) ? 3 : 1);
  if (!stack_ok) bad.push_back("conv stack");
  maskqss::Config mc;
  if (mc.FusedWidth() != 896) bad.push_back("fused width");
  maskqss::MaskQss m(mc);
  m.Init(1);
  auto tr = m.ForwardTrace(m.Extract(masksim::SyntheticSpeech(1, 0.06)));
  if (tr.fused.dim(1) != 896) bad.push_back("fused tensor");
  if (AttributeVector::For(Condition::kPlastic).code.size() != 4 || kNumConditions != 4)
    bad.push_back("attribute dimension");
  // The generator's input carries LPS plus one map per attribute.
  generator::Generator g(generator::Config::Desk());
  const auto& w0 = g.params().Get("enc0.w");
  if (w0.dim(1) != 1 + 4) bad.push_back("generator input channels");
  std::string d = bad.empty() ? "257 bins, 9-layer stack, 896 fused, 4 attributes" : "";
  for (const auto& b : bad) d += b + " mismatch; ";
  return {bad.empty(), d};
}

// ---------------------------------------------------------------- losses

double Clip(double p) {
  return std::min(std::max(p, losses::kProbFloor), 1 - losses::kProbFloor);
}

Outcome LossOracles() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g;
  double worst = 0;
  auto note = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 4;
    std::vector<Tensor> dr, df, probs, a, b, est;
    std::vector<Condition> labels;
    std::vector<double> target;
    double adv_d = 0, adv_g = 0, cls = 0, l1 = 0, mos = 0;
    for (int i = 0; i < n; ++i) {
      const double r = u(rng), f = u(rng);
      dr.push_back(Tensor::Scalar(r));
      df.push_back(Tensor::Scalar(f));
      adv_d += -std::log(Clip(r)) + std::log(Clip(f));
      adv_g += -std::log(Clip(f));

      std::vector<double> p(4);
      double z = 0;
      for (auto& v : p) z += (v = u(rng) + 1e-3);
      for (auto& v : p) v /= z;
      const int k = static_cast<int>(rng() % 4);
      probs.push_back(Tensor::FromData({4}, p));
      labels.push_back(ConditionFromIndex(k));
      cls += -std::log(std::max(p[k], losses::kProbFloor));

      const int len = 3 + i;
      std::vector<double> va(len), vb(len);
      double item = 0;
      for (int j = 0; j < len; ++j) {
        va[j] = g(rng);
        vb[j] = g(rng);
        item += std::abs(va[j] - vb[j]);
      }
      a.push_back(Tensor::FromData({len}, va));
      b.push_back(Tensor::FromData({len}, vb));
      l1 += item / len;

      const double e = 1 + 4 * u(rng), t = 1 + 4 * u(rng);
      est.push_back(Tensor::Scalar(e));
      target.push_back(t);
      mos += std::abs(e - t);
    }
    note(losses::AdversarialCritic(dr, df).item(), adv_d / n);
    note(losses::AdversarialGenerator(df).item(), adv_g / n);
    note(losses::Classification(probs, labels).item(), cls / n);
    note(losses::MeanL1(a, b).item(), l1 / n);
    note(losses::Mos(est, target).item(), mos / n);
  }
  // Weighted sums with lambda = (2, 3, 2, 2).
  losses::Report r;
  r.values = {{"adv_d", 0.5}, {"adv_g", 1.25}, {"cls_c", 0.75}, {"cls_g", 0.5},
              {"cyc", 0.25}, {"idm", 1.0}, {"mos", 2.0}};
  const auto t = losses::Compose(r, {});
  const bool weights_ok = t.total_cd == 0.5 + 2 * 0.75 && t.total_g == 1.25 + 0.75 + 1.0 + 2.0 &&
                          t.total_hl == 5.0 + 2.0;
  const losses::Weights w;
  const bool lambdas = w.lambda1 == 2 && w.lambda2 == 3 && w.lambda3 == 2 && w.lambda4 == 2;
  return {worst <= 1e-9 && weights_ok && lambdas,
          "max deviation " + Fmt(worst, 3) + " over 1000 batches; totals " +
              (weights_ok ? "match" : "differ")};
}

// ---------------------------------------------------------------- gradients

Tensor RandomLps(int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(static_cast<std::size_t>(frames) * 257);
  for (auto& x : v) x = g(rng);
  return Tensor::FromData({frames, 257}, v);
}

Outcome GradientChecks() {
  const auto t0 = std::chrono::steady_clock::now();
  generator::Generator gen(generator::Config::Desk());
  gen.Init(1);
  critic::Critic crit(critic::Config::Desk());
  crit.Init(2);
  const Tensor y = RandomLps(6, 3), x = RandomLps(6, 4);
  const auto src = AttributeVector::For(Condition::kCotton);
  const auto tgt = AttributeVector::For(Condition::kClean);
  const losses::Weights w;

  auto gen_loss = [&] {
    Tensor fake = gen.Forward(y, tgt);
    Tensor adv = losses::AdversarialGenerator({crit.Forward(fake).realness});
    Tensor cls = losses::Classification({crit.ClassProbabilities(fake)}, {Condition::kClean});
    Tensor cyc = losses::MeanL1({gen.Forward(fake, src)}, {y});
    Tensor idm = losses::MeanL1({gen.Forward(y, src)}, {y});
    return losses::TotalGenerator(adv, cyc, cls, idm, w);
  };
  crit.params().SetRequiresGrad(false);
  const double eg = testing::SliceGradCheck(gen.params(), gen_loss, 100, 11);
  crit.params().SetRequiresGrad(true);

  gen.params().SetRequiresGrad(false);
  Tensor fake;
  {
    nn::NoGradGuard ng;
    fake = gen.Forward(y, tgt);
  }
  auto crit_loss = [&] {
    Tensor adv = losses::AdversarialCritic({crit.Forward(x).realness}, {crit.Forward(fake).realness});
    Tensor cls = losses::Classification({crit.ClassProbabilities(y)}, {Condition::kCotton});
    return losses::TotalCritic(adv, cls, w);
  };
  const double ec = testing::SliceGradCheck(crit.params(), crit_loss, 100, 12);

  maskqss::MaskQss m;
  m.Init(5);
  const auto feats = m.Extract(masksim::SyntheticSpeech(9, 0.04));
  auto m_loss = [&] { return losses::Mos({m.Forward(feats)}, {4.2}); };
  const double em = testing::SliceGradCheck(m.params(), m_loss, 100, 13);

  const double dt = Seconds(t0);
  return {eg < 1e-3 && ec < 1e-3 && em < 1e-3 && dt < 120,
          "max rel err generator " + Fmt(eg, 3) + ", critic " + Fmt(ec, 3) + ", MaskQSS " +
              Fmt(em, 3) + "; " + Fmt(dt, 3) + " s"};
}

// ---------------------------------------------------------------- attention

Outcome UnitFilterIdentity() {
  generator::Generator full(generator::Config::Desk());
  full.Init(21);
  auto cfg = generator::Config::Desk();
  cfg.attention = false;
  generator::Generator plain(cfg);
  for (auto& [name, t] : plain.params().entries()) {
    Tensor d = t;
    d.mutable_value() = full.params().Get(name).value();
  }
  const Tensor y = RandomLps(20, 22);
  bool ok = true;
  for (Condition c : kAllConditions) {
    const auto t = AttributeVector::For(c);
    auto tr = full.ForwardTrace(y, t, {.force_unit_filter = true});
    ok = ok && tr.output.value() == plain.Forward(y, t).value() &&
         tr.output.value() == full.OutputConv(tr.x_hat).value();
  }
  return {ok, ok ? "bit-identical for all four targets" : "outputs differ"};
}

// ---------------------------------------------------------------- desk training

// Two synthetic sentences times clean + three masks.
struct Desk {
  testing::TempDir dir;
  datastore::CorpusManifest manifest;
  trainer::Corpus corpus;
  std::optional<trainer::TrainState> state;
  std::vector<trainer::LabeledAudio> labels;
  bool phase1_done = false, phase2_done = false;

  Desk() {
    manifest = testing::SyntheticCorpus(dir.str(), 2, 0.2);
    corpus = trainer::LoadCorpus(manifest);
    auto cfg = trainer::TrainConfig::Desk();
    cfg.seed = 1;
    state.emplace(trainer::TrainState::Create(cfg, trainer::FitNorm(corpus)));
    for (const auto& u : corpus.utterances)
      labels.push_back({u.id, u.wave, trainer::ProxyMos(u.spec, corpus.CleanReference(u)->spec)});
  }
};

Desk& SharedDesk() {
  static Desk d;
  return d;
}

double WindowMean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

Outcome Phase1Desk() {
  auto& d = SharedDesk();
  auto& s = *d.state;
  const auto t0 = std::chrono::steady_clock::now();
  trainer::TrainLog log;
  trainer::RunPhase1(s, d.corpus, 500, &log);
  const double dt = Seconds(t0);
  d.phase1_done = true;
  std::vector<double> total;
  for (const auto& r : log.rows()) total.push_back(r.totals->total_g);
  const std::size_t win = 25;
  const double early = WindowMean(total, 0, win);
  const double late = WindowMean(total, total.size() - win, total.size());
  const double drop = 1 - late / early;
  const bool cfg_ok = s.cfg.batch_size == 2 && s.cfg.adam.lr == 1e-4 && s.cfg.adam.beta1 == 0.5 &&
                      s.cfg.adam.beta2 == 0.999;
  return {drop >= 0.5 && dt < 900 && cfg_ok,
          "total_g moving average (25 its) " + Fmt(early) + " -> " + Fmt(late) + " (" +
              Fmt(100 * drop, 3) + "% drop), " + Fmt(dt, 4) + " s"};
}

Outcome Phase2Overfit() {
  auto& d = SharedDesk();
  auto& s = *d.state;
  const auto t0 = std::chrono::steady_clock::now();
  trainer::TrainLog log;
  s.round = 1;
  const double err = trainer::RunPhase2(s, d.labels, 2000, &log);
  d.phase2_done = true;
  return {d.labels.size() == 8 && err < 0.1,
          "mean |M - target| over " + std::to_string(d.labels.size()) + " items " + Fmt(err) +
              ", " + Fmt(Seconds(t0), 4) + " s"};
}

Outcome Phase3Reduction() {
  auto& d = SharedDesk();
  auto cfg = trainer::TrainConfig::Desk();
  cfg.seed = 5;
  cfg.crop_frames = 16;
  double worst5 = 0, worst1 = 0;
  int rows = 0;
  for (double value : {5.0, 1.0}) {
    auto s = trainer::TrainState::Create(cfg, d.state->norm);
    trainer::ConstantPredictor m(value);
    trainer::TrainLog log;
    trainer::RunPhase3(s, d.corpus, {}, 5, &log, &m);
    for (const auto& r : log.rows()) {
      ++rows;
      if (value == 5.0)
        worst5 = std::max(worst5, std::abs(r.totals->total_hl - r.totals->total_g));
      else
        worst1 = std::max(worst1, std::abs(r.report.Get("mos") - 4.0) +
                                      std::abs((r.totals->total_hl - r.totals->total_g) - 4.0));
    }
  }
  return {rows == 10 && worst5 <= 1e-9 && worst1 <= 1e-12,
          "M=5: max |total_hl - total_g| " + Fmt(worst5, 3) + "; M=1: mos term 4.0, max deviation " +
              Fmt(worst1, 3)};
}

Outcome DirectionCheck() {
  auto& d = SharedDesk();
  if (!d.phase1_done || !d.phase2_done) return {false, "needs the phase-1 and phase-2 checks"};
  auto& s = *d.state;
  trainer::RunPhase3(s, d.corpus, d.labels, 100, nullptr);
  auto rep = evaluation::EvaluateModels(s.gen, s.norm, *s.mqss, d.manifest);
  std::map<Condition, std::pair<double, double>> by;
  for (const auto& r : rep.rows)
    (r.enhanced ? by[r.condition].second : by[r.condition].first) = r.mean_score;
  bool ok = by.size() == 3;
  std::string detail;
  for (const auto& [c, v] : by) {
    ok = ok && v.second >= v.first;
    detail += std::string(ConditionName(c)) + " masked " + Fmt(v.first) + " enhanced " +
              Fmt(v.second) + "; ";
  }
  return {ok, detail};
}

Outcome AblationWiring() {
  auto& d = SharedDesk();
  auto cfg = trainer::TrainConfig::Desk();
  auto full = trainer::TrainState::Create(cfg, d.state->norm);
  cfg.variant = trainer::Variant::kNoMA;
  cfg.generator.attention = false;
  auto noma = trainer::TrainState::Create(cfg, d.state->norm);

  cfg = trainer::TrainConfig::Desk();
  cfg.variant = trainer::Variant::kNoM;
  cfg.iterations_phase1 = 2;
  cfg.crop_frames = 8;
  auto nom = trainer::TrainState::Create(cfg, d.state->norm);
  trainer::SyntheticRater rater;
  testing::TempDir out;
  auto r = trainer::RunProtocol(nom, d.corpus, rater, out.str(), nullptr);
  const bool ok = noma.gen.ParameterCount() < full.gen.ParameterCount() &&
                  r.phases == std::vector<int>{1} && r.checkpoints.size() == 1 && !nom.HasPredictor();
  return {ok, "generator params full " + std::to_string(full.gen.ParameterCount()) + ", noMA " +
                  std::to_string(noma.gen.ParameterCount()) + "; noM phases run " +
                  std::to_string(r.phases.size())};
}

// ---------------------------------------------------------------- evaluation

double PearsonOracle(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

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

Outcome Correlations() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  double worst = 0, mono = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + trial;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = std::round(4 * g(rng)) / 2;  // some ties
      b[i] = g(rng) + 0.3 * a[i];
    }
    worst = std::max(worst, std::abs(evaluation::Pcc(a, b) - PearsonOracle(a, b)));
    worst = std::max(worst, std::abs(evaluation::Srcc(a, b) -
                                     PearsonOracle(RankOracle(a), RankOracle(b))));
    std::vector<double> t;
    for (double v : b) t.push_back(std::exp(v) * 3 + std::pow(v, 3));
    mono = std::max(mono, std::abs(evaluation::Srcc(b, t) - 1.0));
  }
  return {worst <= 1e-12 && mono <= 1e-12,
          "max deviation " + Fmt(worst, 3) + ", monotone |SRCC - 1| " + Fmt(mono, 3)};
}

Outcome PairedAccuracy() {
  // cell -> (pairs, subjects, correct)
  struct Plan {
    Condition mask;
    bool enhanced;
    int pairs, subjects, correct;
  };
  const std::vector<Plan> plan{{Condition::kN95, false, 4, 3, 9},
                               {Condition::kN95, true, 4, 3, 5},
                               {Condition::kCotton, true, 2, 5, 10},
                               {Condition::kPlastic, false, 3, 2, 0}};
  std::vector<datastore::PairRecord> recs;
  for (const auto& p : plan) {
    int made = 0;
    for (int i = 0; i < p.pairs; ++i)
      for (int s = 0; s < p.subjects; ++s) {
        datastore::PairRecord r;
        r.pair_id = std::string(ConditionName(p.mask)) + (p.enhanced ? "E" : "M") + std::to_string(i);
        r.mask = p.mask;
        r.enhanced = p.enhanced;
        r.subject_id = "s" + std::to_string(s);
        r.correct = made++ < p.correct;
        recs.push_back(r);
      }
  }
  std::shuffle(recs.begin(), recs.end(), std::mt19937_64(3));
  const auto cells = evaluation::PairedAccuracy(recs);
  // Hand-computed correct / (pairs x subjects).
  const std::map<std::pair<Condition, bool>, double> expect{
      {{Condition::kN95, false}, 0.75}, {{Condition::kN95, true}, 5.0 / 12},
      {{Condition::kCotton, true}, 1.0}, {{Condition::kPlastic, false}, 0.0}};
  bool ok = cells.size() == expect.size();
  std::string detail;
  for (const auto& [k, v] : expect) {
    auto it = cells.find({k.first, k.second});
    ok = ok && it != cells.end() && it->second.accuracy == v;
    if (it != cells.end())
      detail += evaluation::CellName(it->first) + " " + Fmt(it->second.accuracy) + "; ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- masksim

double BandPower(const signal::Waveform& w, double lo_hz) {
  auto s = signal::Stft(w);
  double acc = 0;
  int n = 0;
  for (int t = 0; t < s.frames; ++t)
    for (int k = 0; k < signal::kBins; ++k)
      if (k * 16000.0 / 512 > lo_hz) {
        acc += std::exp(s.Lps(t, k));
        ++n;
      }
  return acc / n;
}

Outcome MasksimLowpass() {
  bool ok = true;
  std::string detail;
  for (const auto& p : masksim::DefaultProfiles())
    for (std::uint64_t seed : {1, 2, 3}) {
      auto probe = testing::WhiteNoise(seed * 17, 2 * signal::kSampleRate, 0.1);
      auto y = masksim::ApplyMask(probe, p, seed);
      const double lost = 10 * std::log10(BandPower(probe, p.cutoff_hz) / BandPower(y, p.cutoff_hz));
      ok = ok && lost >= p.stopband_atten_db - 3;
      if (seed == 1)
        detail += p.name() + " " + Fmt(lost, 3) + " dB (need " +
                  Fmt(p.stopband_atten_db - 3, 3) + "); ";
    }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"signal-round-trip", SignalRoundTrip},
      {"shape-config-conformance", ShapeConformance},
      {"loss-oracles", LossOracles},
      {"gradient-checks", GradientChecks},
      {"unit-filter-identity", UnitFilterIdentity},
      {"phase1-desk-training", Phase1Desk},
      {"phase2-overfit", Phase2Overfit},
      {"phase3-reduction", Phase3Reduction},
      {"desk-direction-check", DirectionCheck},
      {"ablation-wiring", AblationWiring},
      {"pcc-srcc", Correlations},
      {"paired-accuracy", PairedAccuracy},
      {"masksim-lowpass", MasksimLowpass},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
