// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/maskqss.h"

#include <random>
#include <string>

#include "maskse/error.h"
#include "maskse/nn/ops.h"

namespace maskse::maskqss {

using nn::Tensor;

namespace {

std::string L(const char* block, std::size_t i) {
  return std::string(block) + ".conv" + std::to_string(i);
}

}  // namespace

std::vector<ConvLayer> DefaultConvStack() {
  return {{16, 3, 1, 1}, {16, 3, 1, 1}, {16, 3, 1, 3},
          {32, 3, 1, 1}, {32, 3, 1, 3}, {64, 3, 1, 1},
          {64, 3, 1, 3}, {128, 3, 1, 1}, {128, 3, 1, 3}};
}

std::vector<int> StackWidths(const std::vector<ConvLayer>& stack, int width) {
  std::vector<int> out;
  for (const auto& l : stack) {
    width = nn::ConvOutputSize(width, l.kernel, l.stride_freq, l.kernel / 2);
    out.push_back(width);
  }
  return out;
}

void Config::Validate() const {
  if (conv_stack.empty()) throw ConfigError("maskqss: empty conv stack");
  for (const auto& l : conv_stack)
    if (l.channels <= 0 || l.kernel % 2 == 0 || l.stride_time < 1 || l.stride_freq < 1)
      throw ConfigError("maskqss: bad conv layer");
  if (projection <= 0 || lstm_hidden <= 0 || dense <= 0)
    throw ConfigError("maskqss: sizes must be positive");
}

nlohmann::json Config::ToJson() const {
  nlohmann::json stack = nlohmann::json::array();
  for (const auto& l : conv_stack)
    stack.push_back({l.channels, l.kernel, l.stride_time, l.stride_freq});
  return {{"conv_stack", stack},
          {"projection", projection},
          {"lstm_hidden", lstm_hidden},
          {"dense", dense},
          {"output_bias", output_bias},
          {"scatter",
           {{"octaves", scatter.octaves},
            {"wavelets_per_octave", scatter.wavelets_per_octave},
            {"hop", scatter.hop},
            {"lowpass_sigma", scatter.lowpass_sigma},
            {"max_center", scatter.max_center},
            {"log_compress", scatter.log_compress},
            {"log_floor", scatter.log_floor}}}};
}

Config Config::FromJson(const nlohmann::json& j) {
  Config c;
  c.conv_stack.clear();
  for (const auto& l : j.at("conv_stack"))
    c.conv_stack.push_back({l.at(0).get<int>(), l.at(1).get<int>(),
                            l.at(2).get<int>(), l.at(3).get<int>()});
  c.projection = j.at("projection").get<int>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.dense = j.at("dense").get<int>();
  c.output_bias = j.at("output_bias").get<double>();
  const auto& s = j.at("scatter");
  c.scatter.octaves = s.at("octaves").get<int>();
  c.scatter.wavelets_per_octave = s.at("wavelets_per_octave").get<int>();
  c.scatter.hop = s.at("hop").get<int>();
  c.scatter.lowpass_sigma = s.at("lowpass_sigma").get<double>();
  c.scatter.max_center = s.at("max_center").get<double>();
  c.scatter.log_compress = s.at("log_compress").get<bool>();
  c.scatter.log_floor = s.at("log_floor").get<double>();
  c.Validate();
  return c;
}

MaskQss::MaskQss(Config cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
  const int widths[2] = {cfg_.scatter.channels(), signal::kWindow};
  const char* blocks[2] = {"cb1", "cb2"};
  for (int b = 0; b < 2; ++b) {
    int cin = 1;
    for (std::size_t i = 0; i < cfg_.conv_stack.size(); ++i) {
      const auto& l = cfg_.conv_stack[i];
      params_.Add(L(blocks[b], i) + ".w", {l.channels, cin, l.kernel, l.kernel});
      params_.Add(L(blocks[b], i) + ".b", {l.channels});
      cin = l.channels;
    }
    const int flat = cin * StackWidths(cfg_.conv_stack, widths[b]).back();
    params_.Add(std::string(blocks[b]) + ".proj.w", {cfg_.projection, flat});
    params_.Add(std::string(blocks[b]) + ".proj.b", {cfg_.projection});
  }
  const int h = cfg_.lstm_hidden, d = cfg_.FusedWidth();
  for (const char* dir : {"lstm.fw", "lstm.bw"}) {
    params_.Add(std::string(dir) + ".w_ih", {4 * h, d});
    params_.Add(std::string(dir) + ".w_hh", {4 * h, h});
    params_.Add(std::string(dir) + ".b", {4 * h});
  }
  params_.Add("dense.w", {cfg_.dense, 2 * h});
  params_.Add("dense.b", {cfg_.dense});
  params_.Add("out.w", {1, cfg_.dense});
  params_.Add("out.b", {1});
}

void MaskQss::Init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : params_.entries()) {
    Tensor p = t;
    const auto& s = p.shape();
    if (s.size() == 1) {
      nn::Fill(p, 0.0);
    } else if (s.size() == 4) {
      nn::InitUniform(p, s[1] * s[2] * s[3], rng);
    } else {
      nn::InitUniform(p, s[1], rng);
    }
  }
  Tensor ob = params_.Get("out.b");
  nn::Fill(ob, cfg_.output_bias);
  // Forget-gate bias 1 in both directions.
  for (const char* dir : {"lstm.fw.b", "lstm.bw.b"}) {
    Tensor b = params_.Get(dir);
    const int h = cfg_.lstm_hidden;
    for (int i = h; i < 2 * h; ++i) b.mutable_value()[i] = 1.0;
  }
}

Features MaskQss::Extract(const signal::Waveform& w) const {
  signal::ValidateWaveform(w);
  const auto sc = signal::Scattering(w, cfg_.scatter);
  const auto fm = signal::FrameWaveform(w);
  Features f;
  f.scatter = Tensor::FromData({sc.frames, sc.channels}, sc.coeffs);
  f.frames = Tensor::FromData({fm.frames, fm.width}, fm.data);
  f.resampler = signal::ScatterToFrameResampler(sc.frames, fm.frames, cfg_.scatter);
  return f;
}

Tensor MaskQss::ConvBlock(const Tensor& x, const char* block) const {
  Tensor h = x;
  for (std::size_t i = 0; i < cfg_.conv_stack.size(); ++i) {
    const auto& l = cfg_.conv_stack[i];
    if (h.dim(2) < 1)
      throw InvalidInput("maskqss: input too narrow for the conv stack");
    h = nn::Conv2d(h, params_.Get(L(block, i) + ".w"), params_.Get(L(block, i) + ".b"),
                   {l.stride_time, l.stride_freq, l.kernel / 2, l.kernel / 2});
    h = nn::Relu(h);
  }
  return h;
}

MaskQss::Trace MaskQss::Head(const Tensor& scatter, const Tensor& frames,
                             const std::vector<double>& resampler) const {
  const int t = frames.dim(0), ts = scatter.dim(0);
  if (t < 1) throw InvalidInput("maskqss: need at least one frame");
  Trace tr;
  tr.cb1 = ConvBlock(nn::Reshape(scatter, {1, ts, scatter.dim(1)}), "cb1");
  tr.cb2 = ConvBlock(nn::Reshape(frames, {1, t, frames.dim(1)}), "cb2");
  Tensor p1 = nn::Linear(nn::ChannelsToFrames(tr.cb1), params_.Get("cb1.proj.w"),
                         params_.Get("cb1.proj.b"));
  p1 = nn::ApplyConstantLeft(resampler, t, p1);
  Tensor p2 = nn::Linear(nn::ChannelsToFrames(tr.cb2), params_.Get("cb2.proj.w"),
                         params_.Get("cb2.proj.b"));
  tr.fused = nn::ConcatColumns(p1, p2);
  nn::LstmWeights fw{params_.Get("lstm.fw.w_ih"), params_.Get("lstm.fw.w_hh"),
                     params_.Get("lstm.fw.b")};
  nn::LstmWeights bw{params_.Get("lstm.bw.w_ih"), params_.Get("lstm.bw.w_hh"),
                     params_.Get("lstm.bw.b")};
  Tensor h = nn::BiLstm(tr.fused, fw, bw);
  h = nn::Relu(nn::Linear(h, params_.Get("dense.w"), params_.Get("dense.b")));
  tr.frame_scores = nn::Linear(h, params_.Get("out.w"), params_.Get("out.b"));
  tr.score = nn::Mean(tr.frame_scores);
  return tr;
}

MaskQss::Trace MaskQss::ForwardTrace(const Features& f) const {
  return Head(f.scatter, f.frames, f.resampler);
}

MaskQss::Trace MaskQss::ForwardWave(const Tensor& wave) const {
  Tensor sc = signal::ScatterOp(wave, cfg_.scatter);
  Tensor fr = signal::FrameOp(wave);
  const auto rs = signal::ScatterToFrameResampler(sc.dim(0), fr.dim(0), cfg_.scatter);
  return Head(sc, fr, rs);
}

MosEstimate MaskQss::Predict(const signal::Waveform& w) const {
  nn::NoGradGuard guard;
  const Trace tr = ForwardTrace(Extract(w));
  MosEstimate m;
  m.frame_scores = tr.frame_scores.values();
  double sum = 0;
  for (double v : m.frame_scores) sum += v;
  m.utterance_score = sum / static_cast<double>(m.frame_scores.size());
  return m;
}

}  // namespace maskse::maskqss
