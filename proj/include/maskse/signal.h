// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Audio <-> feature conversions at 16 kHz: 512/80 STFT log-power spectra,
// phase-reusing weighted overlap-add inversion, first-order scattering
// coefficients and Hann-windowed waveform framing. Every function here is
// pure. The nn::Tensor overloads at the bottom are the differentiable forms
// used inside the quality predictor and phase-3 training.

#ifndef MASKSE_SIGNAL_H_
#define MASKSE_SIGNAL_H_

#include <cstddef>
#include <vector>

#include "maskse/nn/tensor.h"

namespace maskse::signal {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindow = 512;
inline constexpr int kHop = 80;
inline constexpr int kBins = kWindow / 2 + 1;  // 257
inline constexpr double kPowerFloor = 1e-10;
// Overlap-add normalizer floor; only reached within a window of either edge.
inline constexpr double kOlaFloor = 0.1;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

// Row-major T x 257 matrices.
struct SpectralFrames {
  int frames = 0;
  std::vector<double> lps;    // natural-log power
  std::vector<double> phase;  // radians, [-pi, pi]
  int hop = kHop;
  int window = kWindow;

  double Lps(int t, int k) const { return lps[t * kBins + k]; }
  double Phase(int t, int k) const { return phase[t * kBins + k]; }
};

struct ScatterConfig {
  int octaves = 6;              // J
  int wavelets_per_octave = 8;  // Q
  int hop = 128;                // output subsampling, samples
  double lowpass_sigma = 64.0;  // Gaussian averaging window std, samples
  double max_center = 0.35;     // highest wavelet center, cycles/sample
  bool log_compress = false;
  double log_floor = 1e-5;

  int channels() const { return octaves * wavelets_per_octave; }
  // Shortest waveform the averaging filter supports.
  int min_length() const { return static_cast<int>(8 * lowpass_sigma); }
  double CenterFrequency(int channel) const;  // cycles/sample
  double Bandwidth(int channel) const;        // Gaussian std, cycles/sample
};

// Row-major T' x K.
struct ScatterCoeffs {
  int frames = 0;
  int channels = 0;
  int octaves = 0;
  int wavelets_per_octave = 0;
  int hop = 0;
  bool log_compressed = false;
  std::vector<double> coeffs;

  double At(int t, int k) const { return coeffs[t * channels + k]; }
};

// Row-major T x 512.
struct FrameMatrix {
  int frames = 0;
  int width = kWindow;
  std::vector<double> data;
};

// Number of full 512-sample windows at hop 80; 0 if shorter than a window.
int FrameCount(std::size_t length);
int ScatterFrameCount(std::size_t length, const ScatterConfig& cfg);

// Periodic Hann window of length 512.
const std::vector<double>& HannWindow();

// Throws InvalidInput unless samples are finite and the rate is 16 kHz.
void ValidateWaveform(const Waveform& w);

SpectralFrames Stft(const Waveform& w);
Waveform Istft(const SpectralFrames& s);
ScatterCoeffs Scattering(const Waveform& w, const ScatterConfig& cfg = {});
FrameMatrix FrameWaveform(const Waveform& w);

// Frequency response of wavelet `channel` at normalized frequency f
// (cycles/sample, f in [0, 0.5]).
double WaveletResponse(const ScatterConfig& cfg, int channel, double f);

// Matrix (rows_out x rows_in) that linearly resamples scattering frames onto
// STFT frame centers.
std::vector<double> ScatterToFrameResampler(int scatter_frames,
                                            int stft_frames,
                                            const ScatterConfig& cfg);

// Windowed-sinc FIR low-pass, Hamming window, `taps` odd. cutoff is in
// cycles/sample.
std::vector<double> DesignLowpass(double cutoff, int taps);
// Linear convolution, output aligned to the input (group delay removed).
std::vector<double> FilterZeroPhase(const std::vector<double>& x,
                                    const std::vector<double>& taps);

// Differentiable forms.
// lps: T x 257 tensor; phase: T x 257 row-major, fixed.
nn::Tensor IstftOp(const nn::Tensor& lps, const std::vector<double>& phase);
// wave: 1-D tensor -> T x 512.
nn::Tensor FrameOp(const nn::Tensor& wave);
// wave: 1-D tensor -> T' x K.
nn::Tensor ScatterOp(const nn::Tensor& wave, const ScatterConfig& cfg);

}  // namespace maskse::signal

#endif  // MASKSE_SIGNAL_H_
