// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/masksim.h"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "maskse/error.h"
#include "maskse/wav.h"

namespace maskse::masksim {

namespace fs = std::filesystem;

namespace {

constexpr double kNyquist = signal::kSampleRate / 2.0;
// The FIR transition band is placed entirely below the nominal cutoff.
constexpr double kTransitionGuardHz = 150.0;
// Worst-case stopband leakage of the 255-tap Hamming design (about -53 dB).
constexpr double kStopbandLeak = 0.003;

double TiltGain(double tilt_db_per_octave, double f_hz) {
  if (f_hz <= kTiltReferenceHz || tilt_db_per_octave == 0.0) return 1.0;
  const double db = tilt_db_per_octave * std::log2(f_hz / kTiltReferenceHz);
  return std::pow(10.0, db / 20.0);
}

double ResidualGain(const MaskProfile& p) {
  return std::max(0.0, std::pow(10.0, -p.stopband_atten_db / 20.0) - kStopbandLeak);
}

std::vector<double> ApplyTilt(const std::vector<double>& x, double tilt) {
  if (tilt == 0.0) return x;
  std::size_t n = 1;
  while (n < x.size() + 1024) n <<= 1;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(n, 0.0), spec, out;
  for (std::size_t i = 0; i < x.size(); ++i) in[i] = x[i];
  fft.fwd(spec, in);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t kk = k <= n / 2 ? k : n - k;
    const double f = static_cast<double>(kk) * signal::kSampleRate / n;
    spec[k] *= TiltGain(tilt, f);
  }
  fft.inv(out, spec);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = out[i].real();
  return y;
}

std::uint64_t Mix(std::uint64_t seed, const std::string& s) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string Stem(const datastore::ManifestEntry& e) {
  return fs::path(e.path).stem().string();
}

}  // namespace

void MaskProfile::Validate() const {
  if (condition == Condition::kClean)
    throw InvalidInput("mask profile cannot use the clean condition");
  if (!(cutoff_hz >= 1000 && cutoff_hz <= 8000))
    throw InvalidInput(name() + ": cutoff_hz must be in [1000, 8000]");
  if (!(stopband_atten_db > 0))
    throw InvalidInput(name() + ": stopband_atten_db must be positive");
  if (std::isnan(tilt_db_per_octave) || std::isnan(noise_floor_db))
    throw InvalidInput(name() + ": NaN parameter");
}

std::vector<MaskProfile> DefaultProfiles() {
  const double off = -std::numeric_limits<double>::infinity();
  return {
      {Condition::kN95, 7000, 20, -1, off},
      {Condition::kCotton, 5000, 25, -2, off},
      {Condition::kPlastic, 6000, 15, -1, -35},
  };
}

std::vector<MaskProfile> ProfilesFromConfig(const KeyValueConfig& cfg) {
  std::vector<MaskProfile> out;
  for (const auto& section : cfg.sections()) {
    auto c = ParseCondition(section);
    if (!c || *c == Condition::kClean)
      throw InvalidInput("unknown mask profile section [" + section + "]");
    MaskProfile p;
    for (const auto& d : DefaultProfiles())
      if (d.condition == *c) p = d;
    p.cutoff_hz = cfg.GetDouble(section + ".cutoff_hz", p.cutoff_hz);
    p.stopband_atten_db = cfg.GetDouble(section + ".stopband_atten_db", p.stopband_atten_db);
    p.tilt_db_per_octave = cfg.GetDouble(section + ".tilt_db_per_octave", p.tilt_db_per_octave);
    p.noise_floor_db = cfg.GetDouble(section + ".noise_floor_db", p.noise_floor_db);
    p.Validate();
    out.push_back(p);
  }
  return out;
}

double ProfileGain(const MaskProfile& p, double f_hz) {
  const double band = f_hz >= p.cutoff_hz && p.cutoff_hz < kNyquist
                          ? std::pow(10.0, -p.stopband_atten_db / 20.0)
                          : 1.0;
  return band * TiltGain(p.tilt_db_per_octave, f_hz);
}

signal::Waveform ApplyMask(const signal::Waveform& w, const MaskProfile& p,
                           std::uint64_t seed) {
  signal::ValidateWaveform(w);
  p.Validate();
  std::vector<double> y = w.samples;
  if (p.cutoff_hz < kNyquist) {
    const double design = std::max(100.0, p.cutoff_hz - kTransitionGuardHz);
    const auto taps = signal::DesignLowpass(design / signal::kSampleRate, kFirTaps);
    const std::vector<double> low = signal::FilterZeroPhase(w.samples, taps);
    const double r = ResidualGain(p);
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = low[i] + r * (w.samples[i] - low[i]);
  }
  y = ApplyTilt(y, p.tilt_db_per_octave);
  if (std::isfinite(p.noise_floor_db)) {
    double energy = 0;
    for (double v : w.samples) energy += v * v;
    const double rms = std::sqrt(energy / std::max<std::size_t>(1, w.size()));
    const double sigma = rms * std::pow(10.0, p.noise_floor_db / 20.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : y) v += noise(rng);
  }
  signal::Waveform out;
  out.samples = std::move(y);
  return out;
}

SynthesisResult SynthesizeCorpus(const datastore::CorpusManifest& clean,
                                  const std::vector<MaskProfile>& profiles,
                                  std::uint64_t seed,
                                  const std::string& output_root) {
  for (const auto& p : profiles) p.Validate();
  SynthesisResult result;
  for (const auto& e : clean.entries()) {
    if (e.condition != Condition::kClean) continue;
    signal::Waveform w;
    try {
      w = wav::Read(e.path);
      signal::ValidateWaveform(w);
    } catch (const Error& ex) {
      result.errors.push_back(e.path + ": " + ex.what());
      continue;
    }
    const std::string stem = Stem(e);
    auto emit = [&](Condition c, const signal::Waveform& audio) {
      const fs::path dir = fs::path(output_root) / ConditionName(c) / e.speaker_id;
      fs::create_directories(dir);
      const fs::path file = dir / (stem + ".wav");
      wav::Write(file.string(), audio);
      datastore::ManifestEntry out = e;
      out.utterance_id = std::string(ConditionName(c)) + "/" + e.speaker_id + "/" + stem;
      out.path = fs::absolute(file).string();
      out.condition = c;
      out.needs_resample = false;
      out.duration_s = static_cast<double>(audio.size()) / signal::kSampleRate;
      result.manifest.Add(std::move(out));
    };
    try {
      emit(Condition::kClean, w);
      for (const auto& p : profiles)
        emit(p.condition, ApplyMask(w, p, Mix(seed, e.utterance_id + "|" + p.name())));
    } catch (const Error& ex) {
      result.errors.push_back(e.path + ": " + ex.what());
    }
  }
  return result;
}

signal::Waveform SyntheticSpeech(std::uint64_t seed, double seconds) {
  const auto len = static_cast<std::size_t>(seconds * signal::kSampleRate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double base_f0 = 100.0 + 120.0 * uni(rng);
  const double sr = signal::kSampleRate;
  std::vector<double> y(len, 0.0);
  const auto hp_taps = signal::DesignLowpass(3000.0 / sr, 63);

  std::size_t pos = 0;
  double phase0 = 0;
  while (pos < len) {
    const double kind = uni(rng);
    std::size_t seg;
    if (kind < 0.6) {
      seg = static_cast<std::size_t>((0.08 + 0.12 * uni(rng)) * sr);
      seg = std::min(seg, len - pos);
      const double f_start = base_f0 * (0.85 + 0.3 * uni(rng));
      const double f_end = base_f0 * (0.85 + 0.3 * uni(rng));
      const double formants[4] = {300 + 500 * uni(rng), 900 + 1300 * uni(rng),
                                  2300 + 900 * uni(rng), 4000 + 2500 * uni(rng)};
      const double gains[4] = {1.0, 0.6, 0.35, 0.2};
      const double amp = 0.5 + 0.5 * uni(rng);
      for (std::size_t i = 0; i < seg; ++i) {
        const double a = static_cast<double>(i) / std::max<std::size_t>(1, seg - 1);
        const double f0 = f_start + (f_end - f_start) * a;
        phase0 += 2.0 * std::numbers::pi * f0 / sr;
        const double fade = std::min({1.0, i / (0.005 * sr), (seg - i) / (0.005 * sr)});
        double s = 0;
        for (int k = 1; k * f0 < 7900.0; ++k) {
          const double f = k * f0;
          double env = 0.04;
          for (int j = 0; j < 4; ++j) {
            const double d = (f - formants[j]) / (120.0 + 40.0 * j);
            env += gains[j] * std::exp(-0.5 * d * d);
          }
          s += env * std::cos(k * phase0);
        }
        y[pos + i] = amp * fade * s;
      }
    } else if (kind < 0.85) {
      seg = static_cast<std::size_t>((0.05 + 0.07 * uni(rng)) * sr);
      seg = std::min(seg, len - pos);
      std::vector<double> n(seg);
      for (auto& v : n) v = gauss(rng);
      const std::vector<double> low = signal::FilterZeroPhase(n, hp_taps);
      const double amp = 0.4 + 0.4 * uni(rng);
      for (std::size_t i = 0; i < seg; ++i) {
        const double fade = std::min({1.0, i / (0.005 * sr), (seg - i) / (0.005 * sr)});
        y[pos + i] = amp * fade * (n[i] - low[i]);
      }
    } else {
      seg = static_cast<std::size_t>((0.03 + 0.05 * uni(rng)) * sr);
      seg = std::min(seg, len - pos);
      for (std::size_t i = 0; i < seg; ++i) y[pos + i] = 0.002 * gauss(rng);
    }
    pos += std::max<std::size_t>(seg, 1);
  }
  double peak = 0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (auto& v : y) v *= 0.5 / peak;
  signal::Waveform w;
  w.samples = std::move(y);
  return w;
}

}  // namespace maskse::masksim
