// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/generator.h"

#include <cmath>
#include <random>
#include <string>

#include "maskse/error.h"
#include "maskse/nn/ops.h"
#include "maskse/signal.h"

namespace maskse {

using nn::Tensor;

AttributeVector AttributeVector::For(Condition c) {
  AttributeVector t;
  t.code.assign(kNumConditions, 0.0);
  t.code[Index(c)] = 1.0;
  return t;
}

Condition AttributeVector::condition() const {
  if (code.size() != static_cast<std::size_t>(kNumConditions))
    throw InvalidInput("attribute vector must have 4 entries");
  int hot = -1;
  for (int i = 0; i < kNumConditions; ++i) {
    if (code[i] == 1.0) {
      if (hot >= 0) throw InvalidInput("attribute vector is not one-hot");
      hot = i;
    } else if (code[i] != 0.0) {
      throw InvalidInput("attribute vector is not one-hot");
    }
  }
  if (hot < 0) throw InvalidInput("attribute vector is not one-hot");
  return ConditionFromIndex(hot);
}

FeatureNorm FeatureNorm::Identity() {
  return {std::vector<double>(signal::kBins, 0.0),
          std::vector<double>(signal::kBins, 1.0)};
}

FeatureNorm FeatureNorm::Fit(const std::vector<std::vector<double>>& mats) {
  const int k = signal::kBins;
  std::vector<double> sum(k, 0.0), sq(k, 0.0);
  double n = 0;
  for (const auto& m : mats) {
    if (m.size() % k != 0) throw InvalidInput("LPS matrix width must be 257");
    for (std::size_t i = 0; i < m.size(); ++i) sum[i % k] += m[i];
    n += static_cast<double>(m.size() / k);
  }
  if (n == 0) return Identity();
  FeatureNorm f;
  f.mean.resize(k);
  f.std.resize(k);
  for (int j = 0; j < k; ++j) f.mean[j] = sum[j] / n;
  for (const auto& m : mats)
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double d = m[i] - f.mean[i % k];
      sq[i % k] += d * d;
    }
  for (int j = 0; j < k; ++j) f.std[j] = std::max(1e-3, std::sqrt(sq[j] / n));
  return f;
}

namespace {

// x (T x 257) * scale + shift, both per column and constant.
Tensor ColumnAffine(const Tensor& x, const std::vector<double>& scale,
                    const std::vector<double>& shift) {
  if (x.rank() != 2 || x.dim(1) != signal::kBins)
    throw InvalidInput("LPS must be T x 257, got " + nn::ShapeString(x.shape()));
  const int t = x.dim(0), k = x.dim(1);
  std::vector<double> s(x.numel()), b(x.numel());
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < k; ++j) {
      s[i * k + j] = scale[j];
      b[i * k + j] = shift[j];
    }
  return nn::Add(nn::Mul(x, Tensor::FromData(x.shape(), std::move(s))),
                 Tensor::FromData(x.shape(), std::move(b)));
}

}  // namespace

Tensor FeatureNorm::Normalize(const Tensor& lps) const {
  std::vector<double> scale(mean.size()), shift(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    scale[j] = 1.0 / std[j];
    shift[j] = -mean[j] / std[j];
  }
  return ColumnAffine(lps, scale, shift);
}

Tensor FeatureNorm::Denormalize(const Tensor& z) const {
  return ColumnAffine(z, std, mean);
}

nlohmann::json FeatureNorm::ToJson() const {
  return {{"mean", mean}, {"std", std}};
}

FeatureNorm FeatureNorm::FromJson(const nlohmann::json& j) {
  FeatureNorm f;
  f.mean = j.at("mean").get<std::vector<double>>();
  f.std = j.at("std").get<std::vector<double>>();
  if (f.mean.size() != signal::kBins || f.std.size() != signal::kBins)
    throw ConfigError("feature statistics must have 257 entries");
  return f;
}

}  // namespace maskse

namespace maskse::generator {

using nn::Conv2dGeometry;
using nn::Tensor;

namespace {

constexpr double kLeakySlope = 0.2;

std::string L(const char* prefix, int i) {
  return std::string(prefix) + std::to_string(i);
}

// Attribute code broadcast to 4 constant H x W channels.
Tensor AttributeMaps(const AttributeVector& t, int h, int w) {
  t.condition();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> v(kNumConditions * plane);
  for (int c = 0; c < kNumConditions; ++c)
    std::fill(v.begin() + c * plane, v.begin() + (c + 1) * plane, t.code[c]);
  return Tensor::FromData({kNumConditions, h, w}, std::move(v));
}

Conv2dGeometry Same(int kernel, int stride) {
  return {stride, stride, kernel / 2, kernel / 2};
}

}  // namespace

Config Config::Desk() {
  Config c;
  c.encoder_channels = {8, 16, 32};
  c.decoder_channels = {16, 8};
  c.attention_channels = {8, 8};
  return c;
}

void Config::Validate() const {
  if (encoder_channels.empty() || encoder_channels.size() != encoder_strides.size())
    throw ConfigError("generator: encoder channels/strides mismatch");
  if (decoder_channels.size() + 1 != encoder_channels.size())
    throw ConfigError("generator: need one decoder layer per encoder layer after the first");
  if (encoder_strides[0] != 1)
    throw ConfigError("generator: first encoder stride must be 1");
  for (int c : encoder_channels)
    if (c <= 0) throw ConfigError("generator: channel counts must be positive");
  for (int c : decoder_channels)
    if (c <= 0) throw ConfigError("generator: channel counts must be positive");
  if (encoder_kernel % 2 == 0 || residual_kernel % 2 == 0 ||
      decoder_kernel % 2 == 0 || attention_kernel % 2 == 0 || output_kernel % 2 == 0)
    throw ConfigError("generator: kernels must be odd");
  if (residual_blocks < 0) throw ConfigError("generator: negative block count");
}

nlohmann::json Config::ToJson() const {
  return {{"encoder_channels", encoder_channels},
          {"encoder_strides", encoder_strides},
          {"encoder_kernel", encoder_kernel},
          {"residual_blocks", residual_blocks},
          {"residual_kernel", residual_kernel},
          {"decoder_channels", decoder_channels},
          {"decoder_kernel", decoder_kernel},
          {"attention_channels", attention_channels},
          {"attention_kernel", attention_kernel},
          {"output_kernel", output_kernel},
          {"attention", attention}};
}

Config Config::FromJson(const nlohmann::json& j) {
  Config c;
  c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  c.encoder_strides = j.at("encoder_strides").get<std::vector<int>>();
  c.encoder_kernel = j.at("encoder_kernel").get<int>();
  c.residual_blocks = j.at("residual_blocks").get<int>();
  c.residual_kernel = j.at("residual_kernel").get<int>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  c.decoder_kernel = j.at("decoder_kernel").get<int>();
  c.attention_channels = j.at("attention_channels").get<std::vector<int>>();
  c.attention_kernel = j.at("attention_kernel").get<int>();
  c.output_kernel = j.at("output_kernel").get<int>();
  c.attention = j.at("attention").get<bool>();
  c.Validate();
  return c;
}

Generator::Generator(Config cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
  const int a = kNumConditions;
  int cin = 1 + a;
  const int ek = cfg_.encoder_kernel;
  for (std::size_t i = 0; i < cfg_.encoder_channels.size(); ++i) {
    const int c = cfg_.encoder_channels[i];
    params_.Add(L("enc", i) + ".w", {2 * c, cin, ek, ek});
    params_.Add(L("enc", i) + ".b", {2 * c});
    params_.Add(L("enc", i) + ".gamma", {2 * c});
    params_.Add(L("enc", i) + ".beta", {2 * c});
    cin = c;
  }
  const int cb = cfg_.encoder_channels.back();
  const int rk = cfg_.residual_kernel;
  for (int r = 0; r < cfg_.residual_blocks; ++r) {
    const std::string p = L("res", r);
    params_.Add(p + ".w1", {2 * cb, cb + a, rk, rk});
    params_.Add(p + ".b1", {2 * cb});
    params_.Add(p + ".gamma1", {2 * cb});
    params_.Add(p + ".beta1", {2 * cb});
    params_.Add(p + ".w2", {cb, cb, rk, rk});
    params_.Add(p + ".b2", {cb});
    params_.Add(p + ".gamma2", {cb});
    params_.Add(p + ".beta2", {cb});
  }
  const int dk = cfg_.decoder_kernel;
  cin = cb;
  for (std::size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
    const int c = cfg_.decoder_channels[i];
    params_.Add(L("dec", i) + ".w", {cin, 2 * c, dk, dk});
    params_.Add(L("dec", i) + ".b", {2 * c});
    params_.Add(L("dec", i) + ".gamma", {2 * c});
    params_.Add(L("dec", i) + ".beta", {2 * c});
    cin = c;
  }
  const int xc = cin;
  if (cfg_.attention) {
    const int ak = cfg_.attention_kernel;
    int ain = 1;
    std::size_t i = 0;
    for (; i < cfg_.attention_channels.size(); ++i) {
      params_.Add(L("att", i) + ".w", {cfg_.attention_channels[i], ain, ak, ak});
      params_.Add(L("att", i) + ".b", {cfg_.attention_channels[i]});
      ain = cfg_.attention_channels[i];
    }
    params_.Add(L("att", i) + ".w", {1, ain, ak, ak});
    params_.Add(L("att", i) + ".b", {1});
  }
  const int ok = cfg_.output_kernel;
  params_.Add("out.w", {1, xc, ok, ok});
  params_.Add("out.b", {1});
}

void Generator::Init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : params_.entries()) {
    Tensor p = t;
    const auto& s = p.shape();
    const auto suffix = name.substr(name.find('.') + 1);
    if (suffix.rfind("gamma", 0) == 0) {
      nn::Fill(p, 1.0);
    } else if (s.size() == 1) {
      nn::Fill(p, 0.0);
    } else if (name.rfind("dec", 0) == 0) {
      // Transposed weights are Cin x Cout x KH x KW; fan-in per output is
      // Cin * KH * KW / stride^2, approximated by Cin * KH * KW / 4.
      nn::InitUniform(p, std::max(1, s[0] * s[2] * s[3] / 4), rng);
    } else {
      nn::InitUniform(p, s[1] * s[2] * s[3], rng);
    }
  }
}

Tensor Generator::Attention(const Tensor& y) const {
  if (!cfg_.attention) throw ConfigError("generator has no attention path");
  if (y.rank() != 2 || y.dim(1) != signal::kBins)
    throw InvalidInput("generator input must be T x 257, got " +
                       nn::ShapeString(y.shape()));
  Tensor h = nn::Reshape(y, {1, y.dim(0), y.dim(1)});
  const int ak = cfg_.attention_kernel;
  std::size_t i = 0;
  for (; i < cfg_.attention_channels.size(); ++i) {
    h = nn::Conv2d(h, params_.Get(L("att", i) + ".w"),
                   params_.Get(L("att", i) + ".b"), Same(ak, 1));
    h = nn::LeakyRelu(h, kLeakySlope);
  }
  h = nn::Conv2d(h, params_.Get(L("att", i) + ".w"),
                 params_.Get(L("att", i) + ".b"), Same(ak, 1));
  return nn::Sigmoid(h);
}

Tensor Generator::OutputConv(const Tensor& x) const {
  Tensor o = nn::Conv2d(x, params_.Get("out.w"), params_.Get("out.b"),
                        Same(cfg_.output_kernel, 1));
  return nn::Reshape(o, {o.dim(1), o.dim(2)});
}

Tensor Generator::Forward(const Tensor& y, const AttributeVector& t) const {
  return ForwardTrace(y, t, {}).output;
}

Generator::Trace Generator::ForwardTrace(const Tensor& y,
                                         const AttributeVector& t,
                                         Options opt) const {
  if (y.rank() != 2 || y.dim(1) != signal::kBins || y.dim(0) < 1)
    throw InvalidInput("generator input must be T x 257, got " +
                       nn::ShapeString(y.shape()));
  const int frames = y.dim(0), bins = y.dim(1);
  Tensor h = nn::ConcatChannels(nn::Reshape(y, {1, frames, bins}),
                                AttributeMaps(t, frames, bins));

  // Encoder; sizes before each layer are kept for the decoder.
  std::vector<std::pair<int, int>> sizes;
  const int ek = cfg_.encoder_kernel;
  for (std::size_t i = 0; i < cfg_.encoder_channels.size(); ++i) {
    sizes.emplace_back(h.dim(1), h.dim(2));
    h = nn::Conv2d(h, params_.Get(L("enc", i) + ".w"),
                   params_.Get(L("enc", i) + ".b"),
                   Same(ek, cfg_.encoder_strides[i]));
    h = nn::InstanceNorm(h, params_.Get(L("enc", i) + ".gamma"),
                         params_.Get(L("enc", i) + ".beta"));
    h = nn::Glu(h);
  }

  const int rk = cfg_.residual_kernel;
  for (int r = 0; r < cfg_.residual_blocks; ++r) {
    const std::string p = L("res", r);
    Tensor z = nn::ConcatChannels(h, AttributeMaps(t, h.dim(1), h.dim(2)));
    z = nn::Conv2d(z, params_.Get(p + ".w1"), params_.Get(p + ".b1"), Same(rk, 1));
    z = nn::Glu(nn::InstanceNorm(z, params_.Get(p + ".gamma1"),
                                 params_.Get(p + ".beta1")));
    z = nn::Conv2d(z, params_.Get(p + ".w2"), params_.Get(p + ".b2"), Same(rk, 1));
    z = nn::InstanceNorm(z, params_.Get(p + ".gamma2"), params_.Get(p + ".beta2"));
    h = nn::Add(h, z);
  }

  const int dk = cfg_.decoder_kernel;
  const std::size_t n_enc = cfg_.encoder_channels.size();
  for (std::size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
    const std::size_t e = n_enc - 1 - i;  // encoder layer being undone
    h = nn::ConvTranspose2d(h, params_.Get(L("dec", i) + ".w"),
                            params_.Get(L("dec", i) + ".b"),
                            Same(dk, cfg_.encoder_strides[e]), sizes[e].first,
                            sizes[e].second);
    h = nn::InstanceNorm(h, params_.Get(L("dec", i) + ".gamma"),
                         params_.Get(L("dec", i) + ".beta"));
    h = nn::Glu(h);
  }

  Trace tr;
  tr.x_hat = h;
  if (cfg_.attention && !opt.force_unit_filter) {
    tr.filter = Attention(y);
    tr.attended = nn::MulChannelBroadcast(h, tr.filter);
  } else if (cfg_.attention) {
    tr.filter = Tensor::Full({1, frames, bins}, 1.0);
    tr.attended = nn::MulChannelBroadcast(h, tr.filter);
  } else {
    tr.attended = h;
  }
  tr.output = OutputConv(tr.attended);
  return tr;
}

}  // namespace maskse::generator
