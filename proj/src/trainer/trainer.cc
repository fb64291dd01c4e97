// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/trainer.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "maskse/error.h"
#include "maskse/nn/ops.h"
#include "maskse/wav.h"

namespace maskse::trainer {

namespace fs = std::filesystem;
using nn::Tensor;

const char* VariantName(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoM: return "noM";
    case Variant::kNoMA: return "noMA";
  }
  return "?";
}

Variant ParseVariant(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "noM") return Variant::kNoM;
  if (s == "noMA") return Variant::kNoMA;
  throw InvalidInput("unknown variant '" + s + "' (full, noM, noMA)");
}

// ---------------------------------------------------------------- config

TrainConfig TrainConfig::Desk() {
  TrainConfig c;
  c.generator = generator::Config::Desk();
  c.critic = critic::Config::Desk();
  c.crop_frames = 32;
  return c;
}

void TrainConfig::Validate() const {
  if (!(adam.lr > 0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (iterations_phase1 < 0 || iterations_phase2 < 0 || iterations_phase3 < 0)
    throw ConfigError("iteration counts must be non-negative");
  if (rounds < 0) throw ConfigError("rounds must be non-negative");
  if (crop_frames < 1) throw ConfigError("crop_frames must be positive");
  if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0 ||
      weights.lambda4 < 0)
    throw ConfigError("loss weights must be non-negative");
  if (variant == Variant::kNoMA && generator.attention)
    throw ConfigError("variant noMA requires a generator without attention");
  generator.Validate();
  critic.Validate();
  maskqss.Validate();
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"batch_size", batch_size},
          {"iterations_phase1", iterations_phase1},
          {"iterations_phase2", iterations_phase2},
          {"iterations_phase3", iterations_phase3},
          {"rounds", rounds},
          {"lambda", {weights.lambda1, weights.lambda2, weights.lambda3,
                      weights.lambda4}},
          {"adversarial",
           adversarial == losses::AdversarialForm::kRatio ? "ratio" : "bce"},
          {"variant", VariantName(variant)},
          {"seed", seed},
          {"crop_frames", crop_frames},
          {"mos_target", mos_target},
          {"update_maskqss_in_phase3", update_maskqss_in_phase3},
          {"generator", generator.ToJson()},
          {"critic", critic.ToJson()},
          {"maskqss", maskqss.ToJson()}};
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  c.adam.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.iterations_phase1 = j.at("iterations_phase1").get<int>();
  c.iterations_phase2 = j.at("iterations_phase2").get<int>();
  c.iterations_phase3 = j.at("iterations_phase3").get<int>();
  c.rounds = j.at("rounds").get<int>();
  const auto l = j.at("lambda").get<std::vector<double>>();
  if (l.size() != 4) throw ConfigError("lambda must have 4 entries");
  c.weights = {l[0], l[1], l[2], l[3]};
  c.adversarial = j.at("adversarial").get<std::string>() == "bce"
                      ? losses::AdversarialForm::kBce
                      : losses::AdversarialForm::kRatio;
  c.variant = ParseVariant(j.at("variant").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.crop_frames = j.at("crop_frames").get<int>();
  c.mos_target = j.at("mos_target").get<double>();
  c.update_maskqss_in_phase3 = j.at("update_maskqss_in_phase3").get<bool>();
  c.generator = generator::Config::FromJson(j.at("generator"));
  c.critic = critic::Config::FromJson(j.at("critic"));
  c.maskqss = maskqss::Config::FromJson(j.at("maskqss"));
  c.Validate();
  return c;
}

void TrainConfig::Apply(const KeyValueConfig& kv) {
  if (kv.GetBool("desk", false)) {
    generator = generator::Config::Desk();
    critic = critic::Config::Desk();
    crop_frames = 32;
  }
  adam.lr = kv.GetDouble("lr", adam.lr);
  adam.beta1 = kv.GetDouble("beta1", adam.beta1);
  adam.beta2 = kv.GetDouble("beta2", adam.beta2);
  batch_size = static_cast<int>(kv.GetInt("batch_size", batch_size));
  if (kv.Has("iterations")) {
    const int n = static_cast<int>(kv.GetInt("iterations", 0));
    iterations_phase1 = iterations_phase2 = iterations_phase3 = n;
  }
  iterations_phase1 = static_cast<int>(kv.GetInt("iterations_phase1", iterations_phase1));
  iterations_phase2 = static_cast<int>(kv.GetInt("iterations_phase2", iterations_phase2));
  iterations_phase3 = static_cast<int>(kv.GetInt("iterations_phase3", iterations_phase3));
  rounds = static_cast<int>(kv.GetInt("rounds", rounds));
  if (kv.Has("variant")) variant = ParseVariant(kv.GetString("variant", ""));
  seed = static_cast<std::uint64_t>(kv.GetInt("seed", static_cast<long long>(seed)));
  crop_frames = static_cast<int>(kv.GetInt("crop_frames", crop_frames));
  if (kv.Has("adversarial")) {
    const auto a = kv.GetString("adversarial", "");
    if (a == "ratio") adversarial = losses::AdversarialForm::kRatio;
    else if (a == "bce") adversarial = losses::AdversarialForm::kBce;
    else throw InvalidInput("adversarial must be ratio or bce");
  }
  weights.lambda1 = kv.GetDouble("lambda1", weights.lambda1);
  weights.lambda2 = kv.GetDouble("lambda2", weights.lambda2);
  weights.lambda3 = kv.GetDouble("lambda3", weights.lambda3);
  weights.lambda4 = kv.GetDouble("lambda4", weights.lambda4);
  mos_target = kv.GetDouble("mos_target", mos_target);
  update_maskqss_in_phase3 =
      kv.GetBool("update_maskqss_in_phase3", update_maskqss_in_phase3);
  generator.attention = variant != Variant::kNoMA;
  Validate();
}

// ---------------------------------------------------------------- corpus

const Utterance* Corpus::Find(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return &u;
  return nullptr;
}

const Utterance* Corpus::CleanReference(const Utterance& u) const {
  for (const auto& c : utterances)
    if (c.condition == Condition::kClean && c.speaker == u.speaker && c.stem == u.stem)
      return &c;
  return nullptr;
}

bool Corpus::HasAllConditions() const {
  bool seen[kNumConditions] = {};
  for (const auto& u : utterances) seen[Index(u.condition)] = true;
  return std::all_of(std::begin(seen), std::end(seen), [](bool b) { return b; });
}

Corpus LoadCorpus(const datastore::CorpusManifest& m,
                  std::optional<datastore::Split> split) {
  Corpus c;
  for (const auto& e : m.entries()) {
    if (split && e.split != *split) continue;
    Utterance u;
    u.id = e.utterance_id;
    u.speaker = e.speaker_id;
    u.stem = fs::path(e.path).stem().string();
    u.condition = e.condition;
    u.wave = wav::Read(e.path);
    u.spec = signal::Stft(u.wave);
    c.utterances.push_back(std::move(u));
  }
  return c;
}

std::vector<LabeledAudio> LabelsFromRatings(
    const std::vector<datastore::Rating>& ratings,
    const datastore::CorpusManifest& manifest) {
  const auto means = datastore::MeanScores(ratings);
  std::vector<LabeledAudio> out;
  for (const auto& [id, mean] : means) {
    const auto* e = manifest.Find(id);
    if (!e) throw ConfigError("rated utterance not in manifest: " + id);
    out.push_back({id, wav::Read(e->path), mean});
  }
  if (out.empty()) throw ConfigError("no ratings available for predictor training");
  return out;
}

FeatureNorm FitNorm(const Corpus& corpus) {
  std::vector<std::vector<double>> mats;
  for (const auto& u : corpus.utterances) mats.push_back(u.spec.lps);
  return FeatureNorm::Fit(mats);
}

// ---------------------------------------------------------------- log

TrainLog::TrainLog(std::ostream* sink) : sink_(sink) {
  if (sink_) *sink_ << Header() << '\n';
}

namespace {

const char* kColumns[] = {"adv_d", "adv_g", "cls_c", "cls_g", "cyc", "idm", "mos"};

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string TrainLog::Header() {
  std::string h = "iteration\tphase\tround";
  for (const char* c : kColumns) h += std::string("\t") + c;
  h += "\ttotal_cd\ttotal_g\ttotal_hl";
  return h;
}

std::string TrainLog::Format(const LossRow& r) {
  std::string line = std::to_string(r.iteration) + "\t" + std::to_string(r.phase) +
                     "\t" + std::to_string(r.round);
  for (const char* c : kColumns) {
    auto it = r.report.values.find(c);
    line += "\t" + (it == r.report.values.end() ? std::string() : Num(it->second));
  }
  if (r.totals) {
    line += "\t" + Num(r.totals->total_cd) + "\t" + Num(r.totals->total_g) + "\t" +
            Num(r.totals->total_hl);
  } else {
    line += "\t\t\t";
  }
  return line;
}

void TrainLog::Add(const LossRow& row) {
  rows_.push_back(row);
  if (sink_) *sink_ << Format(row) << '\n';
}

// ---------------------------------------------------------------- state

TrainState::TrainState(const TrainConfig& c, const FeatureNorm& n)
    : cfg(c),
      norm(n),
      gen(c.generator),
      critic(c.critic),
      gen_opt(c.adam),
      critic_opt(c.adam),
      mqss_opt(c.adam),
      rng(c.seed) {}

TrainState TrainState::Create(const TrainConfig& cfg_in, const FeatureNorm& norm) {
  TrainConfig cfg = cfg_in;
  cfg.generator.attention = cfg.variant != Variant::kNoMA;
  cfg.Validate();
  TrainState s(cfg, norm);
  s.gen.Init(cfg.seed * 3 + 1);
  s.critic.Init(cfg.seed * 3 + 2);
  if (cfg.variant == Variant::kFull) {
    s.mqss = std::make_unique<maskqss::MaskQss>(cfg.maskqss);
    s.mqss->Init(cfg.seed * 3 + 3);
  }
  return s;
}

checkpoint::Checkpoint TrainState::ToCheckpoint() const {
  checkpoint::Checkpoint c;
  c.kind = "hl-stargan";
  c.config = {{"train", cfg.ToJson()}, {"norm", norm.ToJson()}};
  c.config["generator"] = cfg.generator.ToJson();
  c.config["critic"] = cfg.critic.ToJson();
  if (mqss) c.config["maskqss"] = cfg.maskqss.ToJson();
  std::ostringstream rs;
  rs << rng;
  c.provenance = {{"phases", phases},
                  {"iteration", iteration},
                  {"round", round},
                  {"seed", cfg.seed},
                  {"variant", VariantName(cfg.variant)},
                  {"rng_state", rs.str()}};
  checkpoint::PutParams(c, "generator/param/", gen.params());
  checkpoint::PutAdam(c, "generator/adam/", gen_opt);
  checkpoint::PutParams(c, "critic/param/", critic.params());
  checkpoint::PutAdam(c, "critic/adam/", critic_opt);
  if (mqss) {
    checkpoint::PutParams(c, "maskqss/param/", mqss->params());
    checkpoint::PutAdam(c, "maskqss/adam/", mqss_opt);
  }
  return c;
}

TrainState TrainState::FromCheckpoint(const checkpoint::Checkpoint& c) {
  if (c.kind != "hl-stargan")
    throw ConfigError("checkpoint kind '" + c.kind + "' is not a training state");
  const TrainConfig cfg = TrainConfig::FromJson(c.config.at("train"));
  TrainState s(cfg, FeatureNorm::FromJson(c.config.at("norm")));
  checkpoint::GetParams(c, "generator/param/", s.gen.params());
  checkpoint::GetAdam(c, "generator/adam/", s.gen_opt);
  checkpoint::GetParams(c, "critic/param/", s.critic.params());
  checkpoint::GetAdam(c, "critic/adam/", s.critic_opt);
  if (c.HasComponent("maskqss")) {
    s.mqss = std::make_unique<maskqss::MaskQss>(cfg.maskqss);
    checkpoint::GetParams(c, "maskqss/param/", s.mqss->params());
    checkpoint::GetAdam(c, "maskqss/adam/", s.mqss_opt);
  }
  const auto& p = c.provenance;
  s.phases = p.at("phases").get<std::vector<int>>();
  s.iteration = p.at("iteration").get<std::int64_t>();
  s.round = p.at("round").get<int>();
  std::istringstream rs(p.at("rng_state").get<std::string>());
  rs >> s.rng;
  if (!rs) throw IoError("checkpoint has a corrupt RNG state");
  return s;
}

GeneratorBundle LoadGenerator(const checkpoint::Checkpoint& c) {
  if (!c.HasComponent("generator"))
    throw ConfigError("checkpoint has no generator");
  GeneratorBundle b;
  b.gen = std::make_unique<generator::Generator>(
      generator::Config::FromJson(c.config.at("generator")));
  checkpoint::GetParams(c, "generator/param/", b.gen->params());
  b.norm = c.config.contains("norm") ? FeatureNorm::FromJson(c.config.at("norm"))
                                     : FeatureNorm::Identity();
  return b;
}

std::unique_ptr<maskqss::MaskQss> LoadMaskQss(const checkpoint::Checkpoint& c) {
  if (!c.HasComponent("maskqss"))
    throw ConfigError("checkpoint has no quality predictor");
  auto m = std::make_unique<maskqss::MaskQss>(
      maskqss::Config::FromJson(c.config.at("maskqss")));
  checkpoint::GetParams(c, "maskqss/param/", m->params());
  return m;
}

// ---------------------------------------------------------------- steps

namespace {

struct Sample {
  const Utterance* u = nullptr;
  Tensor y;                   // normalized LPS crop, T x 257
  std::vector<double> phase;  // matching phase crop
  Condition source = Condition::kClean;
  Condition target = Condition::kClean;
};

Sample Draw(TrainState& s, const Corpus& corpus) {
  const auto n = corpus.utterances.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Sample smp;
  smp.u = &corpus.utterances[pick(s.rng)];
  smp.source = smp.u->condition;
  std::uniform_int_distribution<int> other(1, kNumConditions - 1);
  smp.target = ConditionFromIndex((Index(smp.source) + other(s.rng)) % kNumConditions);
  const int frames = smp.u->spec.frames;
  const int len = std::min(frames, s.cfg.crop_frames);
  std::uniform_int_distribution<int> start_d(0, frames - len);
  const int start = start_d(s.rng);
  const auto b = smp.u->spec.lps.begin() + static_cast<std::ptrdiff_t>(start) * signal::kBins;
  std::vector<double> lps(b, b + static_cast<std::ptrdiff_t>(len) * signal::kBins);
  const auto pb = smp.u->spec.phase.begin() + static_cast<std::ptrdiff_t>(start) * signal::kBins;
  smp.phase.assign(pb, pb + static_cast<std::ptrdiff_t>(len) * signal::kBins);
  smp.y = s.norm.Normalize(Tensor::FromData({len, signal::kBins}, std::move(lps)));
  return smp;
}

void RequireCorpus(const Corpus& corpus) {
  if (corpus.utterances.empty()) throw ConfigError("training corpus is empty");
  if (!corpus.HasAllConditions())
    throw ConfigError("training corpus must contain all four conditions");
}

// One critic update followed by one generator update. With `m`, the
// generator objective gains the MOS term on G(Y, clean).
LossRow AdversarialIteration(TrainState& s, const Corpus& corpus,
                             const QualityPredictor* m, int phase) {
  const int batch = s.cfg.batch_size;
  std::vector<Sample> smp;
  for (int b = 0; b < batch; ++b) smp.push_back(Draw(s, corpus));
  losses::Report rep;

  // Critic step.
  s.critic.params().ZeroGrad();
  s.critic.params().SetRequiresGrad(true);
  {
    std::vector<Tensor> d_real, d_fake, probs;
    std::vector<Condition> labels;
    for (const auto& x : smp) {
      Tensor fake;
      {
        nn::NoGradGuard ng;
        fake = s.gen.Forward(x.y, AttributeVector::For(x.target));
      }
      const auto real_out = s.critic.Forward(x.y);
      d_real.push_back(real_out.realness);
      probs.push_back(nn::Softmax(real_out.class_logits));
      labels.push_back(x.source);
      d_fake.push_back(s.critic.Forward(fake.Detach()).realness);
    }
    Tensor adv_d = losses::AdversarialCritic(d_real, d_fake, s.cfg.adversarial);
    Tensor cls_c = losses::Classification(probs, labels);
    Tensor total = losses::TotalCritic(adv_d, cls_c, s.cfg.weights);
    total.Backward();
    s.critic_opt.Step(s.critic.params());
    rep.values["adv_d"] = adv_d.item();
    rep.values["cls_c"] = cls_c.item();
  }

  // Generator step; the critic only passes gradients through.
  s.critic.params().SetRequiresGrad(false);
  s.gen.params().ZeroGrad();
  {
    std::vector<Tensor> d_fake, probs, cyc_a, cyc_b, idm_a, mos_est;
    std::vector<Condition> targets;
    for (const auto& x : smp) {
      Tensor fake = s.gen.Forward(x.y, AttributeVector::For(x.target));
      const auto out = s.critic.Forward(fake);
      d_fake.push_back(out.realness);
      probs.push_back(nn::Softmax(out.class_logits));
      targets.push_back(x.target);
      cyc_a.push_back(s.gen.Forward(fake, AttributeVector::For(x.source)));
      cyc_b.push_back(x.y);
      idm_a.push_back(s.gen.Forward(x.y, AttributeVector::For(x.source)));
      if (m) {
        Tensor clean = x.target == Condition::kClean
                           ? fake
                           : s.gen.Forward(x.y, AttributeVector::For(Condition::kClean));
        Tensor wave = signal::IstftOp(s.norm.Denormalize(clean), x.phase);
        mos_est.push_back(m->Score(wave));
      }
    }
    Tensor adv_g = losses::AdversarialGenerator(d_fake);
    Tensor cls_g = losses::Classification(probs, targets);
    Tensor cyc = losses::MeanL1(cyc_a, cyc_b);
    Tensor idm = losses::MeanL1(idm_a, cyc_b);
    Tensor total = losses::TotalGenerator(adv_g, cyc, cls_g, idm, s.cfg.weights);
    rep.values["adv_g"] = adv_g.item();
    rep.values["cls_g"] = cls_g.item();
    rep.values["cyc"] = cyc.item();
    rep.values["idm"] = idm.item();
    if (m) {
      Tensor mos = losses::Mos(mos_est, std::vector<double>(mos_est.size(), s.cfg.mos_target));
      rep.values["mos"] = mos.item();
      total = nn::Add(total, mos);
    }
    total.Backward();
    s.gen_opt.Step(s.gen.params());
  }
  s.critic.params().SetRequiresGrad(true);

  LossRow row;
  row.iteration = ++s.iteration;
  row.phase = phase;
  row.round = s.round;
  row.report = rep;
  row.totals = losses::Compose(rep, s.cfg.weights);
  return row;
}

struct PredictorItem {
  maskqss::Features features;
  double label = 0;
};

std::vector<PredictorItem> PrepareItems(const maskqss::MaskQss& m,
                                        const std::vector<LabeledAudio>& labels) {
  std::vector<PredictorItem> items;
  for (const auto& l : labels) items.push_back({m.Extract(l.wave), l.label});
  return items;
}

// One Adam step of the predictor on a random batch; returns the batch loss.
double PredictorStep(TrainState& s, const std::vector<PredictorItem>& items) {
  std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
  std::vector<Tensor> est;
  std::vector<double> target;
  s.mqss->params().SetRequiresGrad(true);
  s.mqss->params().ZeroGrad();
  for (int b = 0; b < s.cfg.batch_size; ++b) {
    const auto& it = items[pick(s.rng)];
    est.push_back(s.mqss->Forward(it.features));
    target.push_back(it.label);
  }
  Tensor loss = losses::Mos(est, target);
  loss.Backward();
  s.mqss_opt.Step(s.mqss->params());
  return loss.item();
}

}  // namespace

void RunPhase1(TrainState& s, const Corpus& corpus, int iterations, TrainLog* log) {
  RequireCorpus(corpus);
  for (int i = 0; i < iterations; ++i) {
    const LossRow row = AdversarialIteration(s, corpus, nullptr, 1);
    if (log) log->Add(row);
  }
}

double RunPhase2(TrainState& s, const std::vector<LabeledAudio>& labels,
                 int iterations, TrainLog* log) {
  if (!s.mqss) throw ConfigError("phase 2 needs the quality predictor (variant full)");
  if (labels.empty()) throw ConfigError("phase 2 needs at least one rated utterance");
  const auto items = PrepareItems(*s.mqss, labels);
  for (int i = 0; i < iterations; ++i) {
    const double loss = PredictorStep(s, items);
    LossRow row;
    row.iteration = ++s.iteration;
    row.phase = 2;
    row.round = s.round;
    row.report.values["mos"] = loss;
    if (log) log->Add(row);
  }
  nn::NoGradGuard ng;
  double err = 0;
  for (const auto& it : items) err += std::abs(s.mqss->Forward(it.features).item() - it.label);
  return err / static_cast<double>(items.size());
}

void RunPhase3(TrainState& s, const Corpus& corpus,
               const std::vector<LabeledAudio>& labels, int iterations,
               TrainLog* log, const QualityPredictor* frozen) {
  RequireCorpus(corpus);
  std::unique_ptr<MaskQssPredictor> own;
  const QualityPredictor* m = frozen;
  if (!m) {
    if (!s.mqss)
      throw ConfigError("phase 3 needs the quality predictor; use variant noM to skip it");
    own = std::make_unique<MaskQssPredictor>(*s.mqss);
    m = own.get();
  }
  const bool update = !frozen && s.cfg.update_maskqss_in_phase3 && !labels.empty();
  std::vector<PredictorItem> items;
  if (update) items = PrepareItems(*s.mqss, labels);
  for (int i = 0; i < iterations; ++i) {
    if (s.mqss) s.mqss->params().SetRequiresGrad(false);
    LossRow row = AdversarialIteration(s, corpus, m, 3);
    if (s.mqss) s.mqss->params().SetRequiresGrad(true);
    if (update) row.report.values["mqss_step"] = PredictorStep(s, items);
    if (log) log->Add(row);
  }
}

// ---------------------------------------------------------------- ratings

double ProxyMos(const signal::SpectralFrames& cand, const signal::SpectralFrames& ref) {
  const int t = std::min(cand.frames, ref.frames);
  if (t < 1) throw InvalidInput("proxy rating needs at least one frame");
  const double to_db = 10.0 / std::log(10.0);
  double acc = 0;
  for (int f = 0; f < t; ++f) {
    double sq = 0;
    for (int k = 0; k < signal::kBins; ++k) {
      const double d = (cand.Lps(f, k) - ref.Lps(f, k)) * to_db;
      sq += d * d;
    }
    acc += std::sqrt(sq / signal::kBins);
  }
  const double lsd = acc / t;
  return 1.0 + 4.0 * std::exp(-lsd / 10.0);
}

std::vector<LabeledAudio> StoredRatings::Collect(const TrainState&, const Corpus&) {
  return LabelsFromRatings(store_.LoadRatings(), manifest_);
}

std::vector<LabeledAudio> SyntheticRater::Collect(const TrainState& s,
                                                  const Corpus& corpus) {
  std::vector<LabeledAudio> out;
  for (const auto& u : corpus.utterances) {
    const Utterance* ref = corpus.CleanReference(u);
    if (!ref) continue;
    if (u.condition == Condition::kClean) {
      out.push_back({u.id, u.wave, ProxyMos(u.spec, ref->spec)});
      continue;
    }
    out.push_back({u.id, u.wave, ProxyMos(u.spec, ref->spec)});
    signal::Waveform enh = Enhance(s.gen, s.norm, u.wave);
    const auto spec = signal::Stft(enh);
    out.push_back({"enhanced:" + u.id, std::move(enh), ProxyMos(spec, ref->spec)});
  }
  if (out.empty()) throw ConfigError("synthetic rater found no clean references");
  return out;
}

// ---------------------------------------------------------------- protocol

std::vector<int> Schedule(const TrainConfig& cfg) {
  std::vector<int> p = {1};
  if (cfg.variant != Variant::kFull) return p;
  for (int r = 0; r < cfg.rounds; ++r) {
    p.push_back(2);
    p.push_back(3);
  }
  return p;
}

namespace {

std::string StagePath(const std::string& dir, std::size_t stage, int phase) {
  std::ostringstream os;
  os << "stage" << std::setw(2) << std::setfill('0') << stage << "-phase" << phase
     << ".ckpt";
  return (fs::path(dir) / os.str()).string();
}

}  // namespace

ProtocolResult RunProtocol(TrainState& s, const Corpus& corpus, RatingsSource& ratings,
                           const std::string& out_dir, TrainLog* log) {
  RequireCorpus(corpus);
  fs::create_directories(out_dir);
  const auto schedule = Schedule(s.cfg);
  ProtocolResult result;

  // Resume after the last finished stage.
  std::size_t first = 0;
  for (std::size_t k = schedule.size(); k-- > 0;) {
    const auto path = StagePath(out_dir, k, schedule[k]);
    if (fs::exists(path)) {
      s = TrainState::FromCheckpoint(checkpoint::Load(path));
      first = k + 1;
      spdlog::info("resuming after {}", path);
      break;
    }
  }
  for (std::size_t k = 0; k < first; ++k)
    result.checkpoints.push_back(StagePath(out_dir, k, schedule[k]));

  std::vector<LabeledAudio> labels;
  if (first < schedule.size() && first > 0 && schedule[first] == 3)
    labels = ratings.Collect(s, corpus);
  for (std::size_t k = first; k < schedule.size(); ++k) {
    const int phase = schedule[k];
    spdlog::info("stage {} phase {}", k, phase);
    if (phase == 1) {
      RunPhase1(s, corpus, s.cfg.iterations_phase1, log);
    } else if (phase == 2) {
      ++s.round;
      labels = ratings.Collect(s, corpus);
      const double err = RunPhase2(s, labels, s.cfg.iterations_phase2, log);
      spdlog::info("predictor mean abs error {:.4f} on {} items", err, labels.size());
    } else {
      RunPhase3(s, corpus, labels, s.cfg.iterations_phase3, log);
    }
    s.phases.push_back(phase);
    const auto path = StagePath(out_dir, k, phase);
    checkpoint::Save(s.ToCheckpoint(), path);
    result.checkpoints.push_back(path);
  }
  result.phases = s.phases;
  return result;
}

signal::Waveform Enhance(const generator::Generator& g, const FeatureNorm& norm,
                         const signal::Waveform& w) {
  signal::ValidateWaveform(w);
  signal::SpectralFrames spec = signal::Stft(w);
  nn::NoGradGuard ng;
  Tensor y = norm.Normalize(Tensor::FromData({spec.frames, signal::kBins}, spec.lps));
  Tensor x = norm.Denormalize(g.Forward(y, AttributeVector::For(Condition::kClean)));
  spec.lps = x.values();
  return signal::Istft(spec);
}

}  // namespace maskse::trainer
