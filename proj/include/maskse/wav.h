// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_WAV_H_
#define MASKSE_WAV_H_

#include <cstdint>
#include <string>

#include "maskse/signal.h"

namespace maskse::wav {

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::int64_t frames = 0;
};

// Parses the RIFF header only. Throws IoError on unreadable or malformed
// files.
WavInfo ReadInfo(const std::string& path);

// Reads a 16-bit PCM mono WAV at 16 kHz or 48 kHz; 48 kHz input is
// resampled to 16 kHz. Samples are scaled to [-1, 1).
signal::Waveform Read(const std::string& path);

// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void Write(const std::string& path, const signal::Waveform& w);

// 3:1 decimation with an anti-aliasing FIR.
std::vector<double> Resample48kTo16k(const std::vector<double>& x);

}  // namespace maskse::wav

#endif  // MASKSE_WAV_H_
