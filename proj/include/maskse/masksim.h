// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Face-mask corruption simulator. A mask acts on speech as a low-pass
// filter with a finite stopband, a gentle high-frequency tilt and, for some
// masks, a small added noise floor. The profile values are simulator knobs.

#ifndef MASKSE_MASKSIM_H_
#define MASKSE_MASKSIM_H_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "maskse/condition.h"
#include "maskse/config.h"
#include "maskse/datastore.h"
#include "maskse/signal.h"

namespace maskse::masksim {

struct MaskProfile {
  Condition condition = Condition::kN95;  // n95, cotton or plastic
  double cutoff_hz = 7000;
  double stopband_atten_db = 20;
  double tilt_db_per_octave = 0;
  // Relative to input RMS; -inf disables the noise.
  double noise_floor_db = -std::numeric_limits<double>::infinity();

  std::string name() const { return ConditionName(condition); }
  // Throws InvalidInput unless the invariants hold.
  void Validate() const;
};

inline constexpr int kFirTaps = 255;
// Tilt is flat below this frequency.
inline constexpr double kTiltReferenceHz = 1000.0;

std::vector<MaskProfile> DefaultProfiles();

// Reads [n95] / [cotton] / [plastic] sections with keys cutoff_hz,
// stopband_atten_db, tilt_db_per_octave and noise_floor_db. Sections other
// than the three mask names are rejected.
std::vector<MaskProfile> ProfilesFromConfig(const KeyValueConfig& cfg);

// Magnitude response of the deterministic part (filter + tilt) at f Hz.
double ProfileGain(const MaskProfile& p, double f_hz);

signal::Waveform ApplyMask(const signal::Waveform& w, const MaskProfile& p,
                           std::uint64_t seed);

struct SynthesisResult {
  datastore::CorpusManifest manifest;
  std::vector<std::string> errors;  // per-file failures; the run continues
};

// For every clean entry writes a clean copy to
// <root>/clean/<speaker>/<utt>.wav and one masked file per profile to
// <root>/<profile>/<speaker>/<utt>.wav. Non-clean source entries are
// ignored.
SynthesisResult SynthesizeCorpus(const datastore::CorpusManifest& clean,
                                  const std::vector<MaskProfile>& profiles,
                                  std::uint64_t seed,
                                  const std::string& output_root);

// Desk-scale stand-in for a clean recording: voiced harmonic segments with
// formant envelopes alternating with fricative noise bursts and short
// pauses. Energy extends to 8 kHz so low-pass masks are audible.
signal::Waveform SyntheticSpeech(std::uint64_t seed, double seconds);

}  // namespace maskse::masksim

#endif  // MASKSE_MASKSIM_H_
