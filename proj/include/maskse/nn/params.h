// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_NN_PARAMS_H_
#define MASKSE_NN_PARAMS_H_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "maskse/nn/tensor.h"

namespace maskse::nn {

// Ordered, named collection of trainable leaf tensors.
class ParamSet {
 public:
  // Registers a zero-initialized parameter; names must be unique.
  Tensor Add(const std::string& name, const Shape& shape);
  Tensor Get(const std::string& name) const;
  bool Has(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::size_t Count() const;  // total scalar count
  void ZeroGrad();
  // Frozen parameters take part in forward passes but collect no gradient.
  void SetRequiresGrad(bool on);

  // Deep copy with fresh leaf nodes.
  ParamSet Clone() const;
  // Overwrites values from another set with identical names and shapes.
  void CopyValuesFrom(const ParamSet& other);
  bool ValuesEqual(const ParamSet& other) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Uniform(-bound, bound) with bound = gain * sqrt(3 / fan_in).
void InitUniform(Tensor& t, int fan_in, std::mt19937_64& rng,
                 double gain = 1.0);
void Fill(Tensor& t, double value);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from the gradients currently held by `params`.
  void Step(ParamSet& params);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }

  // Moment buffers keyed by parameter name, for checkpointing.
  const std::map<std::string, std::vector<double>>& first_moments() const {
    return m_;
  }
  const std::map<std::string, std::vector<double>>& second_moments() const {
    return v_;
  }
  void Restore(std::int64_t steps,
               std::map<std::string, std::vector<double>> m,
               std::map<std::string, std::vector<double>> v);

 private:
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace maskse::nn

#endif  // MASKSE_NN_PARAMS_H_
