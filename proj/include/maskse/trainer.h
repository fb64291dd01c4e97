// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Three-phase training: adversarial StarGAN training without the quality
// predictor (phase 1), predictor training on rated audio (phase 2), and joint
// training with the predictor pulling enhanced speech toward a MOS of 5
// (phase 3). RunProtocol runs phase 1 once and then alternates 2 and 3.

#ifndef MASKSE_TRAINER_H_
#define MASKSE_TRAINER_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskse/checkpoint.h"
#include "maskse/config.h"
#include "maskse/critic.h"
#include "maskse/datastore.h"
#include "maskse/generator.h"
#include "maskse/losses.h"
#include "maskse/maskqss.h"
#include "maskse/nn/params.h"
#include "maskse/signal.h"

namespace maskse::trainer {

enum class Variant { kFull, kNoM, kNoMA };
const char* VariantName(Variant v);
Variant ParseVariant(const std::string& s);

struct TrainConfig {
  nn::AdamConfig adam;
  int batch_size = 2;
  int iterations_phase1 = 5000;
  int iterations_phase2 = 5000;
  int iterations_phase3 = 5000;
  int rounds = 2;
  losses::Weights weights;
  losses::AdversarialForm adversarial = losses::AdversarialForm::kRatio;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;
  int crop_frames = 128;
  double mos_target = 5.0;
  bool update_maskqss_in_phase3 = true;
  generator::Config generator;
  critic::Config critic;
  maskqss::Config maskqss;

  // Narrow networks and 32-frame crops for CPU runs.
  static TrainConfig Desk();
  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
  // Keys: desk, lr, beta1, beta2, batch_size, iterations (all phases),
  // iterations_phase{1,2,3}, rounds, variant, seed, crop_frames, adversarial
  // (ratio|bce), lambda{1..4}, mos_target, update_maskqss_in_phase3.
  void Apply(const KeyValueConfig& kv);
};

struct Utterance {
  std::string id;
  std::string speaker;
  std::string stem;
  Condition condition = Condition::kClean;
  signal::Waveform wave;
  signal::SpectralFrames spec;
};

struct Corpus {
  std::vector<Utterance> utterances;

  const Utterance* Find(const std::string& id) const;
  // Clean recording of the same speaker and sentence, if any.
  const Utterance* CleanReference(const Utterance& u) const;
  bool HasAllConditions() const;
};

// Loads and analyzes every entry (optionally of one split). Utterances
// shorter than one window are rejected with InvalidInput.
Corpus LoadCorpus(const datastore::CorpusManifest& m,
                  std::optional<datastore::Split> split = std::nullopt);

struct LabeledAudio {
  std::string id;
  signal::Waveform wave;
  double label = 0;
};

// Joins mean ratings with manifest audio. ConfigError when nothing is rated.
std::vector<LabeledAudio> LabelsFromRatings(
    const std::vector<datastore::Rating>& ratings,
    const datastore::CorpusManifest& manifest);

// The quality-predictor slot used by phase 3.
class QualityPredictor {
 public:
  virtual ~QualityPredictor() = default;
  // wave: 1-D tensor; returns a one-element score.
  virtual nn::Tensor Score(const nn::Tensor& wave) const = 0;
};

class ConstantPredictor : public QualityPredictor {
 public:
  explicit ConstantPredictor(double value) : value_(value) {}
  nn::Tensor Score(const nn::Tensor&) const override {
    return nn::Tensor::Scalar(value_);
  }

 private:
  double value_;
};

class MaskQssPredictor : public QualityPredictor {
 public:
  explicit MaskQssPredictor(const maskqss::MaskQss& m) : m_(m) {}
  nn::Tensor Score(const nn::Tensor& wave) const override {
    return m_.ForwardWave(wave).score;
  }

 private:
  const maskqss::MaskQss& m_;
};

struct LossRow {
  std::int64_t iteration = 0;
  int phase = 0;
  int round = 0;
  losses::Report report;
  std::optional<losses::Totals> totals;
};

class TrainLog {
 public:
  TrainLog() = default;
  // Rows are also written to `sink` as tab-separated lines.
  explicit TrainLog(std::ostream* sink);
  void Add(const LossRow& row);
  const std::vector<LossRow>& rows() const { return rows_; }
  static std::string Header();
  static std::string Format(const LossRow& row);

 private:
  std::ostream* sink_ = nullptr;
  std::vector<LossRow> rows_;
};

class TrainState {
 public:
  static TrainState Create(const TrainConfig& cfg, const FeatureNorm& norm);
  static TrainState FromCheckpoint(const checkpoint::Checkpoint& c);
  checkpoint::Checkpoint ToCheckpoint() const;

  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  bool HasPredictor() const { return mqss != nullptr; }

  TrainConfig cfg;
  FeatureNorm norm;
  generator::Generator gen;
  critic::Critic critic;
  std::unique_ptr<maskqss::MaskQss> mqss;
  nn::Adam gen_opt, critic_opt, mqss_opt;
  std::mt19937_64 rng;
  std::int64_t iteration = 0;
  int round = 0;
  std::vector<int> phases;  // completed phases, in order

 private:
  TrainState(const TrainConfig& cfg, const FeatureNorm& norm);
};

// Per-bin statistics over the corpus.
FeatureNorm FitNorm(const Corpus& corpus);

void RunPhase1(TrainState& s, const Corpus& corpus, int iterations,
               TrainLog* log);
// Returns the mean absolute error over all items after training.
double RunPhase2(TrainState& s, const std::vector<LabeledAudio>& labels,
                 int iterations, TrainLog* log);
// `frozen`, when given, replaces the state's predictor and disables
// predictor updates.
void RunPhase3(TrainState& s, const Corpus& corpus,
               const std::vector<LabeledAudio>& labels, int iterations,
               TrainLog* log, const QualityPredictor* frozen = nullptr);

// Where phase-2 labels come from.
class RatingsSource {
 public:
  virtual ~RatingsSource() = default;
  virtual std::vector<LabeledAudio> Collect(const TrainState& s,
                                            const Corpus& corpus) = 0;
};

class StoredRatings : public RatingsSource {
 public:
  StoredRatings(const datastore::RatingStore& store,
                datastore::CorpusManifest manifest)
      : store_(store), manifest_(std::move(manifest)) {}
  std::vector<LabeledAudio> Collect(const TrainState& s,
                                    const Corpus& corpus) override;

 private:
  const datastore::RatingStore& store_;
  datastore::CorpusManifest manifest_;
};

// Stand-in listener for desk runs: scores audio from its log-spectral
// distance to the clean recording of the same sentence. Rates clean audio,
// raw masked audio and the current generator's enhancement of it.
class SyntheticRater : public RatingsSource {
 public:
  std::vector<LabeledAudio> Collect(const TrainState& s,
                                    const Corpus& corpus) override;
};

// 1 + 4 exp(-d / 10) where d is the frame-averaged log-spectral distance in
// dB over the common frames.
double ProxyMos(const signal::SpectralFrames& candidate,
                const signal::SpectralFrames& reference);

// Phase order for a config: 1 then `rounds` x (2, 3); 1 only without the
// predictor.
std::vector<int> Schedule(const TrainConfig& cfg);

struct ProtocolResult {
  std::vector<std::string> checkpoints;
  std::vector<int> phases;
};

// Runs the schedule, saving `<out_dir>/stageNN-phaseP.ckpt` at each phase
// boundary. When checkpoints from an earlier run exist, resumes after the
// last one (the state argument is then replaced).
ProtocolResult RunProtocol(TrainState& s, const Corpus& corpus,
                           RatingsSource& ratings, const std::string& out_dir,
                           TrainLog* log);

signal::Waveform Enhance(const generator::Generator& g, const FeatureNorm& norm,
                         const signal::Waveform& w);

struct GeneratorBundle {
  std::unique_ptr<generator::Generator> gen;
  FeatureNorm norm;
};
GeneratorBundle LoadGenerator(const checkpoint::Checkpoint& c);
std::unique_ptr<maskqss::MaskQss> LoadMaskQss(const checkpoint::Checkpoint& c);

}  // namespace maskse::trainer

#endif  // MASKSE_TRAINER_H_
