// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Training objectives. Batch quantities are vectors of one-element tensors;
// expectations are batch means.

#ifndef MASKSE_LOSSES_H_
#define MASKSE_LOSSES_H_

#include <map>
#include <string>
#include <vector>

#include "maskse/condition.h"
#include "maskse/nn/tensor.h"

namespace maskse::losses {

inline constexpr double kProbFloor = 1e-7;

struct Weights {
  double lambda1 = 2;  // critic classification
  double lambda2 = 3;  // cycle
  double lambda3 = 2;  // generator classification
  double lambda4 = 2;  // identity
};

enum class AdversarialForm {
  kRatio,  // -ln(d_real / d_fake)
  kBce,    // -ln d_real - ln(1 - d_fake)
};

// Critic adversarial loss over a batch of realness values.
nn::Tensor AdversarialCritic(const std::vector<nn::Tensor>& d_real,
                             const std::vector<nn::Tensor>& d_fake,
                             AdversarialForm form = AdversarialForm::kRatio);
// -mean ln d_fake.
nn::Tensor AdversarialGenerator(const std::vector<nn::Tensor>& d_fake);
// -mean ln p[label]; probs are length-4 simplex tensors.
nn::Tensor Classification(const std::vector<nn::Tensor>& probs,
                          const std::vector<Condition>& labels);
// Mean absolute difference, averaged over the batch.
nn::Tensor MeanL1(const std::vector<nn::Tensor>& a,
                  const std::vector<nn::Tensor>& b);
// mean |estimate - target|.
nn::Tensor Mos(const std::vector<nn::Tensor>& estimates,
               const std::vector<double>& targets);

// Plain-number forms, used by reports and tests.
double AdversarialCritic(double d_real, double d_fake,
                         AdversarialForm form = AdversarialForm::kRatio);
double AdversarialGenerator(double d_fake);

nn::Tensor TotalCritic(const nn::Tensor& adv_d, const nn::Tensor& cls_c,
                       const Weights& w);
nn::Tensor TotalGenerator(const nn::Tensor& adv_g, const nn::Tensor& cyc,
                          const nn::Tensor& cls_g, const nn::Tensor& idm,
                          const Weights& w);

// Named scalar components of one iteration.
struct Report {
  std::map<std::string, double> values;
  double Get(const std::string& name) const;  // ConfigError when absent
};

struct Totals {
  double total_cd = 0;
  double total_g = 0;
  double total_hl = 0;  // total_g + mos when "mos" is present
};

// Needs adv_d, adv_g, cls_c, cls_g, cyc and idm; "mos" is optional.
Totals Compose(const Report& r, const Weights& w);

}  // namespace maskse::losses

#endif  // MASKSE_LOSSES_H_
