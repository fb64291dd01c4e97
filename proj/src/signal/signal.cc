// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/signal.h"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <string>

#include "maskse/error.h"
#include "maskse/nn/ops.h"

namespace maskse::signal {

namespace {

using Complex = std::complex<double>;

Eigen::FFT<double>& Fft() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

std::size_t NextPow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void RequireLength(std::size_t length, std::size_t minimum, const char* what) {
  if (length < minimum)
    throw InvalidInput(std::string(what) + ": signal of " +
                       std::to_string(length) + " samples is shorter than " +
                       std::to_string(minimum));
}

// Spectrum of one windowed frame, bins 0..256.
void FrameSpectrum(const double* x, std::vector<Complex>& bins) {
  const auto& win = HannWindow();
  std::vector<Complex> in(kWindow), out;
  for (int n = 0; n < kWindow; ++n) in[n] = Complex(x[n] * win[n], 0.0);
  Fft().fwd(out, in);
  bins.assign(out.begin(), out.begin() + kBins);
}

// Real frame from a half spectrum given as magnitude and phase.
void SynthesizeFrame(const double* mag, const double* phase, double* frame) {
  std::vector<Complex> spec(kWindow), out;
  for (int k = 0; k < kBins; ++k) {
    Complex v = std::polar(mag[k], phase[k]);
    if (k == 0 || k == kBins - 1) v = Complex(v.real(), 0.0);
    spec[k] = v;
    if (k > 0 && k < kBins - 1) spec[kWindow - k] = std::conj(v);
  }
  Fft().inv(out, spec);
  for (int n = 0; n < kWindow; ++n) frame[n] = out[n].real();
}

std::vector<double> OlaDenominator(int frames) {
  const auto& win = HannWindow();
  const std::size_t len = static_cast<std::size_t>(frames - 1) * kHop + kWindow;
  std::vector<double> den(len, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < kWindow; ++n) den[t * kHop + n] += win[n] * win[n];
  for (auto& d : den) d = std::max(d, kOlaFloor);
  return den;
}

std::vector<double> IstftCore(int frames, const std::vector<double>& lps,
                              const std::vector<double>& phase) {
  const auto& win = HannWindow();
  std::vector<double> den = OlaDenominator(frames);
  std::vector<double> out(den.size(), 0.0);
  std::vector<double> mag(kBins), frame(kWindow);
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < kBins; ++k) mag[k] = std::exp(0.5 * lps[t * kBins + k]);
    SynthesizeFrame(mag.data(), phase.data() + t * kBins, frame.data());
    for (int n = 0; n < kWindow; ++n) out[t * kHop + n] += win[n] * frame[n];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= den[i];
  return out;
}

std::vector<double> LowpassKernel(const ScatterConfig& cfg) {
  const int r = static_cast<int>(4 * cfg.lowpass_sigma);
  std::vector<double> k(2 * r + 1);
  double s = 0;
  for (int m = -r; m <= r; ++m) {
    k[m + r] = std::exp(-0.5 * m * m / (cfg.lowpass_sigma * cfg.lowpass_sigma));
    s += k[m + r];
  }
  for (auto& v : k) v /= s;
  return k;
}

// Everything the scattering backward pass needs.
struct ScatterState {
  ScatterConfig cfg;
  std::size_t length = 0;
  std::size_t fft_size = 0;
  int frames = 0;
  std::vector<std::vector<double>> responses;  // K x fft_size, real
  std::vector<std::vector<Complex>> analytic;  // K x length
  std::vector<double> raw;                     // T' x K before log
  std::vector<double> kernel;
};

std::vector<double> WaveletBank(const ScatterConfig& cfg, int channel,
                                std::size_t n) {
  std::vector<double> resp(n, 0.0);
  for (std::size_t k = 0; k <= n / 2; ++k)
    resp[k] = WaveletResponse(cfg, channel,
                              static_cast<double>(k) / static_cast<double>(n));
  return resp;
}

std::shared_ptr<ScatterState> ScatterForward(const std::vector<double>& w,
                                             const ScatterConfig& cfg) {
  RequireLength(w.size(), static_cast<std::size_t>(cfg.min_length()),
                "scattering");
  auto st = std::make_shared<ScatterState>();
  st->cfg = cfg;
  st->length = w.size();
  st->frames = ScatterFrameCount(w.size(), cfg);
  st->kernel = LowpassKernel(cfg);
  // Zero padding past the longest wavelet's effective support.
  const double min_bw = cfg.Bandwidth(cfg.channels() - 1);
  const auto pad = static_cast<std::size_t>(
      std::ceil(4.0 / (2.0 * std::numbers::pi * min_bw)));
  st->fft_size = NextPow2(w.size() + pad);
  const std::size_t n = st->fft_size;

  std::vector<Complex> in(n, Complex(0, 0)), spec;
  for (std::size_t i = 0; i < w.size(); ++i) in[i] = Complex(w[i], 0.0);
  Fft().fwd(spec, in);

  const int kc = cfg.channels();
  const int r = static_cast<int>(st->kernel.size() / 2);
  st->responses.resize(kc);
  st->analytic.resize(kc);
  st->raw.assign(static_cast<std::size_t>(st->frames) * kc, 0.0);
  std::vector<Complex> prod(n), u;
  std::vector<double> modulus(w.size());
  for (int c = 0; c < kc; ++c) {
    st->responses[c] = WaveletBank(cfg, c, n);
    for (std::size_t k = 0; k < n; ++k) prod[k] = spec[k] * st->responses[c][k];
    Fft().inv(u, prod);
    st->analytic[c].assign(u.begin(), u.begin() + w.size());
    for (std::size_t i = 0; i < w.size(); ++i) modulus[i] = std::abs(u[i]);
    for (int f = 0; f < st->frames; ++f) {
      const long center = static_cast<long>(f) * cfg.hop + cfg.hop / 2;
      double acc = 0;
      for (int m = -r; m <= r; ++m) {
        const long idx = center - m;
        if (idx < 0 || idx >= static_cast<long>(w.size())) continue;
        acc += st->kernel[m + r] * modulus[idx];
      }
      st->raw[f * kc + c] = acc;
    }
  }
  return st;
}

// Gradient w.r.t. the waveform given the gradient w.r.t. raw coefficients.
std::vector<double> ScatterBackward(const ScatterState& st,
                                    const std::vector<double>& graw) {
  const int kc = st.cfg.channels();
  const int r = static_cast<int>(st.kernel.size() / 2);
  const std::size_t n = st.fft_size;
  std::vector<Complex> acc(n, Complex(0, 0)), g(n), gs;
  std::vector<double> gmod(st.length);
  for (int c = 0; c < kc; ++c) {
    std::fill(gmod.begin(), gmod.end(), 0.0);
    for (int f = 0; f < st.frames; ++f) {
      const double gf = graw[f * kc + c];
      if (gf == 0.0) continue;
      const long center = static_cast<long>(f) * st.cfg.hop + st.cfg.hop / 2;
      for (int m = -r; m <= r; ++m) {
        const long idx = center - m;
        if (idx < 0 || idx >= static_cast<long>(st.length)) continue;
        gmod[idx] += st.kernel[m + r] * gf;
      }
    }
    std::fill(g.begin(), g.end(), Complex(0, 0));
    for (std::size_t i = 0; i < st.length; ++i) {
      const Complex u = st.analytic[c][i];
      const double a = std::abs(u);
      if (a > 1e-300) g[i] = gmod[i] * u / a;
    }
    Fft().fwd(gs, g);
    for (std::size_t k = 0; k < n; ++k) acc[k] += gs[k] * st.responses[c][k];
  }
  std::vector<Complex> back;
  Fft().inv(back, acc);
  std::vector<double> gw(st.length);
  for (std::size_t i = 0; i < st.length; ++i) gw[i] = back[i].real();
  return gw;
}

}  // namespace

double ScatterConfig::CenterFrequency(int channel) const {
  return max_center *
         std::pow(2.0, -static_cast<double>(channel) / wavelets_per_octave);
}

double ScatterConfig::Bandwidth(int channel) const {
  // Adjacent filters cross at half their peak.
  const double spacing =
      CenterFrequency(channel) * (1.0 - std::pow(2.0, -1.0 / wavelets_per_octave));
  return spacing / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

double WaveletResponse(const ScatterConfig& cfg, int channel, double f) {
  const double xi = cfg.CenterFrequency(channel);
  const double sigma = cfg.Bandwidth(channel);
  const double s2 = 2.0 * sigma * sigma;
  // Morlet correction keeps the response at DC exactly zero.
  const double kappa = std::exp(-xi * xi / s2);
  return std::exp(-(f - xi) * (f - xi) / s2) - kappa * std::exp(-f * f / s2);
}

int FrameCount(std::size_t length) {
  if (length < static_cast<std::size_t>(kWindow)) return 0;
  return static_cast<int>((length - kWindow) / kHop) + 1;
}

int ScatterFrameCount(std::size_t length, const ScatterConfig& cfg) {
  return static_cast<int>(length / static_cast<std::size_t>(cfg.hop));
}

const std::vector<double>& HannWindow() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kWindow);
    for (int n = 0; n < kWindow; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kWindow);
    return w;
  }();
  return win;
}

void ValidateWaveform(const Waveform& w) {
  if (w.sample_rate != kSampleRate)
    throw InvalidInput("waveform sample rate " + std::to_string(w.sample_rate) +
                       " Hz, expected 16000");
  for (double v : w.samples)
    if (!std::isfinite(v)) throw InvalidInput("waveform has non-finite sample");
}

SpectralFrames Stft(const Waveform& w) {
  ValidateWaveform(w);
  RequireLength(w.size(), kWindow, "stft");
  SpectralFrames s;
  s.frames = FrameCount(w.size());
  s.lps.resize(static_cast<std::size_t>(s.frames) * kBins);
  s.phase.resize(s.lps.size());
  std::vector<Complex> bins;
  for (int t = 0; t < s.frames; ++t) {
    FrameSpectrum(w.samples.data() + t * kHop, bins);
    for (int k = 0; k < kBins; ++k) {
      s.lps[t * kBins + k] = std::log(std::norm(bins[k]) + kPowerFloor);
      s.phase[t * kBins + k] = std::arg(bins[k]);
    }
  }
  return s;
}

Waveform Istft(const SpectralFrames& s) {
  const std::size_t expected = static_cast<std::size_t>(s.frames) * kBins;
  if (s.frames <= 0 || s.lps.size() != expected || s.phase.size() != expected)
    throw InvalidInput("istft: lps/phase shapes inconsistent with " +
                       std::to_string(s.frames) + " frames");
  Waveform w;
  w.samples = IstftCore(s.frames, s.lps, s.phase);
  return w;
}

ScatterCoeffs Scattering(const Waveform& w, const ScatterConfig& cfg) {
  ValidateWaveform(w);
  auto st = ScatterForward(w.samples, cfg);
  ScatterCoeffs out;
  out.frames = st->frames;
  out.channels = cfg.channels();
  out.octaves = cfg.octaves;
  out.wavelets_per_octave = cfg.wavelets_per_octave;
  out.hop = cfg.hop;
  out.log_compressed = cfg.log_compress;
  out.coeffs = std::move(st->raw);
  if (cfg.log_compress)
    for (auto& v : out.coeffs) v = std::log(v + cfg.log_floor);
  return out;
}

FrameMatrix FrameWaveform(const Waveform& w) {
  ValidateWaveform(w);
  RequireLength(w.size(), kWindow, "frame_waveform");
  const auto& win = HannWindow();
  FrameMatrix m;
  m.frames = FrameCount(w.size());
  m.data.resize(static_cast<std::size_t>(m.frames) * kWindow);
  for (int t = 0; t < m.frames; ++t)
    for (int n = 0; n < kWindow; ++n)
      m.data[t * kWindow + n] = w.samples[t * kHop + n] * win[n];
  return m;
}

std::vector<double> ScatterToFrameResampler(int scatter_frames,
                                            int stft_frames,
                                            const ScatterConfig& cfg) {
  if (scatter_frames <= 0 || stft_frames <= 0)
    throw InvalidInput("resampler needs at least one frame on each side");
  std::vector<double> m(static_cast<std::size_t>(stft_frames) * scatter_frames,
                        0.0);
  for (int t = 0; t < stft_frames; ++t) {
    const double center = t * kHop + kWindow / 2.0;
    double u = (center - cfg.hop / 2.0) / cfg.hop;
    u = std::clamp(u, 0.0, static_cast<double>(scatter_frames - 1));
    const int i0 = static_cast<int>(std::floor(u));
    const int i1 = std::min(i0 + 1, scatter_frames - 1);
    const double a = u - i0;
    m[t * scatter_frames + i0] += 1.0 - a;
    m[t * scatter_frames + i1] += a;
  }
  return m;
}

std::vector<double> DesignLowpass(double cutoff, int taps) {
  if (taps < 3 || taps % 2 == 0)
    throw InvalidInput("low-pass tap count must be odd and >= 3");
  if (!(cutoff > 0 && cutoff <= 0.5))
    throw InvalidInput("low-pass cutoff must be in (0, 0.5]");
  std::vector<double> h(taps);
  const int mid = taps / 2;
  double sum = 0;
  for (int n = 0; n < taps; ++n) {
    const int m = n - mid;
    const double sinc =
        m == 0 ? 2.0 * cutoff
               : std::sin(2.0 * std::numbers::pi * cutoff * m) /
                     (std::numbers::pi * m);
    const double hamming =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (taps - 1));
    h[n] = sinc * hamming;
    sum += h[n];
  }
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> FilterZeroPhase(const std::vector<double>& x,
                                    const std::vector<double>& taps) {
  const long mid = static_cast<long>(taps.size() / 2);
  const long len = static_cast<long>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (long i = 0; i < len; ++i) {
    double acc = 0;
    for (long k = 0; k < static_cast<long>(taps.size()); ++k) {
      const long j = i + mid - k;
      if (j >= 0 && j < len) acc += taps[k] * x[j];
    }
    y[i] = acc;
  }
  return y;
}

nn::Tensor IstftOp(const nn::Tensor& lps, const std::vector<double>& phase) {
  if (lps.rank() != 2 || lps.dim(1) != kBins)
    throw InvalidInput("istft: lps must be T x 257, got " +
                       nn::ShapeString(lps.shape()));
  const int frames = lps.dim(0);
  if (frames <= 0 || phase.size() != lps.numel())
    throw InvalidInput("istft: lps/phase shape mismatch");
  auto ph = std::make_shared<std::vector<double>>(phase);
  const auto plain = IstftCore(frames, lps.values(), *ph);
  nn::Buffer y(plain.begin(), plain.end());
  const int len = static_cast<int>(y.size());
  return nn::MakeResult({len}, std::move(y), {lps}, [frames, ph](nn::Node& self) {
    nn::Node* pl = self.parents[0].get();
    const auto& win = HannWindow();
    std::vector<double> den = OlaDenominator(frames);
    auto& gl = pl->Grad();
    std::vector<Complex> in(kWindow), spec;
    for (int t = 0; t < frames; ++t) {
      for (int n = 0; n < kWindow; ++n)
        in[n] = Complex(self.grad[t * kHop + n] / den[t * kHop + n] * win[n], 0);
      Fft().fwd(spec, in);
      for (int k = 0; k < kBins; ++k) {
        const double weight = (k == 0 || k == kBins - 1) ? 1.0 : 2.0;
        const double phi = (*ph)[t * kBins + k];
        const double proj = (std::polar(1.0, phi) * std::conj(spec[k])).real();
        const double mag = std::exp(0.5 * pl->value[t * kBins + k]);
        gl[t * kBins + k] += weight / kWindow * proj * 0.5 * mag;
      }
    }
  });
}

nn::Tensor FrameOp(const nn::Tensor& wave) {
  if (wave.rank() != 1) throw InvalidInput("frame: waveform must be 1-D");
  RequireLength(wave.numel(), kWindow, "frame_waveform");
  const auto& win = HannWindow();
  const int frames = FrameCount(wave.numel());
  nn::Buffer y(static_cast<std::size_t>(frames) * kWindow);
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < kWindow; ++n)
      y[t * kWindow + n] = wave.at(t * kHop + n) * win[n];
  return nn::MakeResult({frames, kWindow}, std::move(y), {wave},
                        [frames](nn::Node& self) {
                          const auto& win = HannWindow();
                          auto& g = self.parents[0]->Grad();
                          for (int t = 0; t < frames; ++t)
                            for (int n = 0; n < kWindow; ++n)
                              g[t * kHop + n] += self.grad[t * kWindow + n] * win[n];
                        });
}

nn::Tensor ScatterOp(const nn::Tensor& wave, const ScatterConfig& cfg) {
  if (wave.rank() != 1) throw InvalidInput("scattering: waveform must be 1-D");
  auto st = ScatterForward(wave.values(), cfg);
  const int kc = cfg.channels();
  nn::Buffer y(st->raw.begin(), st->raw.end());
  if (cfg.log_compress)
    for (auto& v : y) v = std::log(v + cfg.log_floor);
  if (!nn::GradEnabled() || !wave.requires_grad()) {
    // Release the analytic-signal cache early.
    st->analytic.clear();
    st->responses.clear();
  }
  return nn::MakeResult({st->frames, kc}, std::move(y), {wave},
                        [st](nn::Node& self) {
                          std::vector<double> graw(self.grad.begin(), self.grad.end());
                          if (st->cfg.log_compress)
                            for (std::size_t i = 0; i < graw.size(); ++i)
                              graw[i] /= st->raw[i] + st->cfg.log_floor;
                          auto gw = ScatterBackward(*st, graw);
                          auto& g = self.parents[0]->Grad();
                          for (std::size_t i = 0; i < gw.size(); ++i) g[i] += gw[i];
                        });
}

}  // namespace maskse::signal
