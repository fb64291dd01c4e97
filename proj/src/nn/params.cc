// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/nn/params.h"

#include <algorithm>
#include <cmath>

#include "maskse/error.h"

namespace maskse::nn {

Tensor ParamSet::Add(const std::string& name, const Shape& shape) {
  if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
  Tensor t = Tensor::Zeros(shape, /*requires_grad=*/true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamSet::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFound("no parameter named " + name);
  return entries_[it->second].second;
}

bool ParamSet::Has(const std::string& name) const {
  return index_.count(name) > 0;
}

std::size_t ParamSet::Count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamSet::ZeroGrad() {
  for (auto& [name, t] : entries_) t.ZeroGrad();
}

void ParamSet::SetRequiresGrad(bool on) {
  for (auto& [name, t] : entries_) t.node()->requires_grad = on;
}

ParamSet ParamSet::Clone() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) {
    Tensor c = out.Add(name, t.shape());
    c.mutable_value() = t.value();
  }
  return out;
}

void ParamSet::CopyValuesFrom(const ParamSet& other) {
  if (other.entries_.size() != entries_.size())
    throw InvalidInput("parameter set layout mismatch");
  for (auto& [name, t] : entries_) {
    Tensor src = other.Get(name);
    if (src.shape() != t.shape())
      throw InvalidInput("shape mismatch for parameter " + name);
    t.mutable_value() = src.value();
  }
}

bool ParamSet::ValuesEqual(const ParamSet& other) const {
  if (other.entries_.size() != entries_.size()) return false;
  for (const auto& [name, t] : entries_) {
    if (!other.Has(name)) return false;
    Tensor o = other.Get(name);
    if (o.shape() != t.shape() || o.value() != t.value()) return false;
  }
  return true;
}

void InitUniform(Tensor& t, int fan_in, std::mt19937_64& rng, double gain) {
  const double bound = gain * std::sqrt(3.0 / std::max(1, fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.mutable_value()) v = dist(rng);
}

void Fill(Tensor& t, double value) {
  for (auto& v : t.mutable_value()) v = value;
}

void Adam::Step(ParamSet& params) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (const auto& [name, t] : params.entries()) {
    Node* n = t.node();
    if (n->grad.empty()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(n->value.size(), 0.0);
      v.assign(n->value.size(), 0.0);
    }
    for (std::size_t i = 0; i < n->value.size(); ++i) {
      const double g = n->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      n->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::Restore(std::int64_t steps,
                   std::map<std::string, std::vector<double>> m,
                   std::map<std::string, std::vector<double>> v) {
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace maskse::nn
