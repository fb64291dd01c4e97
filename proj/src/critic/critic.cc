// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/critic.h"

#include <random>
#include <string>

#include "maskse/condition.h"
#include "maskse/error.h"
#include "maskse/nn/ops.h"

namespace maskse::critic {

using nn::Tensor;

namespace {

std::string L(int i) { return "trunk" + std::to_string(i); }

}  // namespace

Config Config::Desk() {
  Config c;
  c.channels = {8, 8, 16, 16};
  return c;
}

void Config::Validate() const {
  if (channels.empty() || channels.size() != strides.size())
    throw ConfigError("critic: channels/strides mismatch");
  if (kernel % 2 == 0) throw ConfigError("critic: kernel must be odd");
  if (bins < 1) throw ConfigError("critic: bins must be positive");
}

int Config::TrunkBins() const {
  int w = bins;
  for (int s : strides) w = nn::ConvOutputSize(w, kernel, s, kernel / 2);
  return w;
}

nlohmann::json Config::ToJson() const {
  return {{"channels", channels}, {"strides", strides}, {"kernel", kernel},
          {"leaky_slope", leaky_slope}, {"bins", bins}};
}

Config Config::FromJson(const nlohmann::json& j) {
  Config c;
  c.channels = j.at("channels").get<std::vector<int>>();
  c.strides = j.at("strides").get<std::vector<int>>();
  c.kernel = j.at("kernel").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.bins = j.at("bins").get<int>();
  c.Validate();
  return c;
}

Critic::Critic(Config cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
  int cin = 1;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    params_.Add(L(i) + ".w", {cfg_.channels[i], cin, cfg_.kernel, cfg_.kernel});
    params_.Add(L(i) + ".b", {cfg_.channels[i]});
    cin = cfg_.channels[i];
  }
  const int fw = cfg_.TrunkBins();
  params_.Add("cls.w", {kNumConditions, cin, 1, fw});
  params_.Add("cls.b", {kNumConditions});
  params_.Add("adv.w", {1, cin, 1, fw});
  params_.Add("adv.b", {1});
}

void Critic::Init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : params_.entries()) {
    Tensor p = t;
    const auto& s = p.shape();
    if (s.size() == 1)
      nn::Fill(p, 0.0);
    else
      nn::InitUniform(p, s[1] * s[2] * s[3], rng);
  }
}

Output Critic::Forward(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != cfg_.bins || z.dim(0) < 1)
    throw InvalidInput("critic input must be T x " + std::to_string(cfg_.bins) +
                       ", got " + nn::ShapeString(z.shape()));
  Tensor h = nn::Reshape(z, {1, z.dim(0), z.dim(1)});
  const int pad = cfg_.kernel / 2;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    h = nn::Conv2d(h, params_.Get(L(i) + ".w"), params_.Get(L(i) + ".b"),
                   {cfg_.strides[i], cfg_.strides[i], pad, pad});
    h = nn::LeakyRelu(h, cfg_.leaky_slope);
  }
  Output out;
  out.trunk = h;
  const int frames = h.dim(1);
  // Heads: C x T' x F' -> K x T' x 1.
  Tensor c = nn::Conv2d(h, params_.Get("cls.w"), params_.Get("cls.b"), {});
  c = nn::Reshape(c, {kNumConditions, frames});
  out.frame_logits = c;
  std::vector<double> avg(frames, 1.0 / frames);
  out.class_logits = nn::Reshape(
      nn::MatMul(c, Tensor::FromData({frames, 1}, avg)), {kNumConditions});
  Tensor d = nn::Conv2d(h, params_.Get("adv.w"), params_.Get("adv.b"), {});
  out.frame_real = nn::Sigmoid(nn::Reshape(d, {frames}));
  out.realness = nn::Reshape(nn::Mean(out.frame_real), {1});
  return out;
}

Tensor Critic::ClassProbabilities(const Tensor& z) const {
  return nn::Softmax(Forward(z).class_logits);
}

}  // namespace maskse::critic
