// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/wav.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "maskse/error.h"

namespace maskse::wav {

namespace {

std::uint32_t U32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t U16(const unsigned char* p) { return p[0] | (p[1] << 8); }

void PutU32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void PutU16(std::ofstream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

struct Parsed {
  WavInfo info;
  std::vector<unsigned char> pcm;
};

Parsed Parse(const std::string& path, bool want_data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  unsigned char riff[12];
  if (!is.read(reinterpret_cast<char*>(riff), 12) ||
      std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
    throw IoError(path + ": not a RIFF/WAVE file");
  Parsed out;
  bool have_fmt = false;
  std::uint16_t format = 0;
  while (true) {
    unsigned char hdr[8];
    if (!is.read(reinterpret_cast<char*>(hdr), 8))
      throw IoError(path + ": missing data chunk");
    const std::uint32_t size = U32(hdr + 4);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw IoError(path + ": short fmt chunk");
      std::vector<unsigned char> fmt(size);
      if (!is.read(reinterpret_cast<char*>(fmt.data()), size))
        throw IoError(path + ": truncated fmt chunk");
      format = U16(fmt.data());
      out.info.channels = U16(fmt.data() + 2);
      out.info.sample_rate = static_cast<int>(U32(fmt.data() + 4));
      out.info.bits_per_sample = U16(fmt.data() + 14);
      have_fmt = true;
      if (size % 2) is.ignore(1);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw IoError(path + ": data chunk before fmt");
      if (format != 1) throw IoError(path + ": only PCM WAV is supported");
      const int bytes = out.info.bits_per_sample / 8;
      if (bytes <= 0 || out.info.channels <= 0)
        throw IoError(path + ": bad sample layout");
      out.info.frames = size / (bytes * out.info.channels);
      if (want_data) {
        out.pcm.resize(size);
        if (!is.read(reinterpret_cast<char*>(out.pcm.data()), size))
          throw IoError(path + ": truncated data chunk");
      }
      return out;
    } else {
      is.ignore(size + (size % 2));
    }
  }
}

}  // namespace

WavInfo ReadInfo(const std::string& path) { return Parse(path, false).info; }

std::vector<double> Resample48kTo16k(const std::vector<double>& x) {
  static const std::vector<double> taps = signal::DesignLowpass(7600.0 / 48000.0, 255);
  std::vector<double> filtered = signal::FilterZeroPhase(x, taps);
  std::vector<double> y;
  y.reserve(x.size() / 3 + 1);
  for (std::size_t i = 0; i < filtered.size(); i += 3) y.push_back(filtered[i]);
  return y;
}

signal::Waveform Read(const std::string& path) {
  Parsed p = Parse(path, true);
  if (p.info.bits_per_sample != 16 || p.info.channels != 1)
    throw IoError(path + ": expected 16-bit mono PCM, got " +
                  std::to_string(p.info.bits_per_sample) + "-bit " +
                  std::to_string(p.info.channels) + "-channel");
  if (p.info.sample_rate != 16000 && p.info.sample_rate != 48000)
    throw IoError(path + ": unsupported sample rate " +
                  std::to_string(p.info.sample_rate));
  std::vector<double> samples(static_cast<std::size_t>(p.info.frames));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(U16(p.pcm.data() + 2 * i));
    samples[i] = v / 32768.0;
  }
  signal::Waveform w;
  w.samples = p.info.sample_rate == 48000 ? Resample48kTo16k(samples)
                                          : std::move(samples);
  return w;
}

void Write(const std::string& path, const signal::Waveform& w) {
  if (w.sample_rate != signal::kSampleRate)
    throw InvalidInput("can only write 16 kHz waveforms");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot create " + path);
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  PutU32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  PutU32(os, 16);
  PutU16(os, 1);
  PutU16(os, 1);
  PutU32(os, signal::kSampleRate);
  PutU32(os, signal::kSampleRate * 2);
  PutU16(os, 2);
  PutU16(os, 16);
  os.write("data", 4);
  PutU32(os, data_bytes);
  for (double v : w.samples) {
    const double c = std::clamp(v, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(
        std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
    PutU16(os, static_cast<std::uint16_t>(q));
  }
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace maskse::wav
