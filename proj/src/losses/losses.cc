// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/losses.h"

#include <algorithm>
#include <cmath>

#include "maskse/error.h"
#include "maskse/nn/ops.h"

namespace maskse::losses {

using nn::Tensor;

namespace {

Tensor BatchMean(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidInput("empty batch");
  return nn::Scale(nn::AddN(xs), 1.0 / static_cast<double>(xs.size()));
}

Tensor SafeLog(const Tensor& p) {
  return nn::Log(nn::Clamp(p, kProbFloor, 1.0 - kProbFloor));
}

double ClampProb(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void RequireScalars(const std::vector<Tensor>& xs, const char* what) {
  for (const auto& x : xs)
    if (x.numel() != 1)
      throw InvalidInput(std::string(what) + ": expected one value per item");
}

}  // namespace

Tensor AdversarialCritic(const std::vector<Tensor>& d_real,
                         const std::vector<Tensor>& d_fake,
                         AdversarialForm form) {
  RequireScalars(d_real, "adversarial");
  RequireScalars(d_fake, "adversarial");
  std::vector<Tensor> real_terms, fake_terms;
  for (const auto& d : d_real) real_terms.push_back(nn::Scale(SafeLog(d), -1.0));
  for (const auto& d : d_fake) {
    if (form == AdversarialForm::kRatio) {
      fake_terms.push_back(SafeLog(d));
    } else {
      Tensor one_minus = nn::AddScalar(nn::Scale(d, -1.0), 1.0);
      fake_terms.push_back(nn::Scale(SafeLog(one_minus), -1.0));
    }
  }
  return nn::Add(BatchMean(real_terms), BatchMean(fake_terms));
}

Tensor AdversarialGenerator(const std::vector<Tensor>& d_fake) {
  RequireScalars(d_fake, "adversarial");
  std::vector<Tensor> terms;
  for (const auto& d : d_fake) terms.push_back(nn::Scale(SafeLog(d), -1.0));
  return BatchMean(terms);
}

Tensor Classification(const std::vector<Tensor>& probs,
                      const std::vector<Condition>& labels) {
  if (probs.size() != labels.size())
    throw InvalidInput("classification: batch size mismatch");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].numel() != static_cast<std::size_t>(kNumConditions))
      throw InvalidInput("classification: probabilities must have 4 entries");
    Tensor p = nn::Element(probs[i], Index(labels[i]));
    terms.push_back(nn::Scale(nn::Log(nn::Clamp(p, kProbFloor, 1.0)), -1.0));
  }
  return BatchMean(terms);
}

Tensor MeanL1(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) throw InvalidInput("L1: batch size mismatch");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape())
      throw InvalidInput("L1: shape mismatch " + nn::ShapeString(a[i].shape()) +
                         " vs " + nn::ShapeString(b[i].shape()));
    terms.push_back(nn::MeanAbsDiff(a[i], b[i]));
  }
  return BatchMean(terms);
}

Tensor Mos(const std::vector<Tensor>& estimates,
           const std::vector<double>& targets) {
  if (estimates.size() != targets.size())
    throw InvalidInput("mos loss: batch length mismatch");
  RequireScalars(estimates, "mos loss");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    terms.push_back(nn::Abs(nn::AddScalar(estimates[i], -targets[i])));
  return BatchMean(terms);
}

double AdversarialCritic(double d_real, double d_fake, AdversarialForm form) {
  const double r = ClampProb(d_real), f = ClampProb(d_fake);
  if (form == AdversarialForm::kRatio) return -std::log(r) + std::log(f);
  return -std::log(r) - std::log(ClampProb(1.0 - d_fake));
}

double AdversarialGenerator(double d_fake) { return -std::log(ClampProb(d_fake)); }

Tensor TotalCritic(const Tensor& adv_d, const Tensor& cls_c, const Weights& w) {
  return nn::Add(adv_d, nn::Scale(cls_c, w.lambda1));
}

Tensor TotalGenerator(const Tensor& adv_g, const Tensor& cyc, const Tensor& cls_g,
                      const Tensor& idm, const Weights& w) {
  return nn::AddN({adv_g, nn::Scale(cyc, w.lambda2), nn::Scale(cls_g, w.lambda3),
                   nn::Scale(idm, w.lambda4)});
}

double Report::Get(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw ConfigError("loss component missing: " + name);
  return it->second;
}

Totals Compose(const Report& r, const Weights& w) {
  Totals t;
  t.total_cd = r.Get("adv_d") + w.lambda1 * r.Get("cls_c");
  t.total_g = r.Get("adv_g") + w.lambda2 * r.Get("cyc") + w.lambda3 * r.Get("cls_g") +
              w.lambda4 * r.Get("idm");
  t.total_hl = t.total_g;
  if (r.values.count("mos")) t.total_hl += r.Get("mos");
  return t;
}

}  // namespace maskse::losses
