// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Shared fixtures for the unit and acceptance tests.

#ifndef MASKSE_TESTS_TESTING_H_
#define MASKSE_TESTS_TESTING_H_

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "maskse/datastore.h"
#include "maskse/masksim.h"
#include "maskse/nn/params.h"
#include "maskse/nn/tensor.h"
#include "maskse/wav.h"

namespace maskse::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("maskse-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path_.string() : (path_ / rel).string();
  }

 private:
  std::filesystem::path path_;
};

inline signal::Waveform WhiteNoise(std::uint64_t seed, std::size_t n, double sd = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  signal::Waveform w;
  w.samples.resize(n);
  for (auto& x : w.samples) x = g(rng);
  return w;
}

inline signal::Waveform Sine(double hz, std::size_t n, double amp = 0.5) {
  signal::Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2 * M_PI * hz * static_cast<double>(i) / signal::kSampleRate);
  return w;
}

// `sentences` synthetic clean recordings, one speaker each, plus one masked
// copy per default profile: a corpus of sentences x 4 entries.
inline datastore::CorpusManifest SyntheticCorpus(const std::string& root, int sentences,
                                                 double seconds, std::uint64_t seed = 100) {
  namespace fs = std::filesystem;
  datastore::CorpusManifest clean;
  fs::create_directories(fs::path(root) / "source");
  for (int i = 0; i < sentences; ++i) {
    const auto stem = "s" + std::to_string(i);
    const auto path = (fs::path(root) / "source" / (stem + ".wav")).string();
    wav::Write(path, masksim::SyntheticSpeech(seed + i, seconds));
    datastore::ManifestEntry e;
    e.utterance_id = "clean/spk" + std::to_string(i) + "/" + stem;
    e.path = path;
    e.speaker_id = "spk" + std::to_string(i);
    e.duration_s = seconds;
    clean.Add(e);
  }
  return masksim::SynthesizeCorpus(clean, masksim::DefaultProfiles(), 7,
                                   (fs::path(root) / "corpus").string())
      .manifest;
}

// Central finite difference of `loss` in element `i` of `t`.
inline double FiniteDifference(nn::Tensor& t, std::size_t i,
                               const std::function<double()>& loss, double h = 1e-6) {
  const double orig = t.mutable_value()[i];
  t.mutable_value()[i] = orig + h;
  const double up = loss();
  t.mutable_value()[i] = orig - h;
  const double down = loss();
  t.mutable_value()[i] = orig;
  return (up - down) / (2 * h);
}

inline double RelativeError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

// Backpropagates `loss` once, then compares the gradient of `count`
// parameter elements (drawn uniformly over the whole set) with central
// differences. Returns the largest relative error.
inline double SliceGradCheck(nn::ParamSet& params, const std::function<nn::Tensor()>& loss,
                             int count, std::uint64_t seed, double h = 1e-6) {
  params.ZeroGrad();
  loss().Backward();
  std::vector<std::pair<nn::Tensor, std::size_t>> picks;
  std::size_t total = params.Count();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> u(0, total - 1);
  for (int i = 0; i < count; ++i) {
    std::size_t k = u(rng);
    for (const auto& [name, t] : params.entries()) {
      if (k < t.numel()) {
        picks.emplace_back(t, k);
        break;
      }
      k -= t.numel();
    }
  }
  std::vector<double> analytic;
  for (auto& [t, k] : picks) analytic.push_back(t.grad()[k]);
  nn::NoGradGuard ng;
  double worst = 0;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    auto& [t, k] = picks[i];
    const double fd = FiniteDifference(t, k, [&] { return loss().item(); }, h);
    worst = std::max(worst, RelativeError(analytic[i], fd));
  }
  return worst;
}

inline void QuietLogs() { spdlog::set_level(spdlog::level::warn); }

}  // namespace maskse::testing

#endif  // MASKSE_TESTS_TESTING_H_
