// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Shared-trunk critic: a 4-layer convolutional trunk feeding a 4-way
// condition classifier head and a per-frame real/fake head. Both heads use a
// kernel spanning the whole remaining frequency axis.

#ifndef MASKSE_CRITIC_H_
#define MASKSE_CRITIC_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "maskse/nn/params.h"
#include "maskse/nn/tensor.h"

namespace maskse::critic {

struct Config {
  std::vector<int> channels{32, 32, 64, 64};
  std::vector<int> strides{1, 2, 1, 2};
  int kernel = 3;
  double leaky_slope = 0.2;
  int bins = 257;

  static Config Desk();
  void Validate() const;
  // Frequency width left after the trunk.
  int TrunkBins() const;
  nlohmann::json ToJson() const;
  static Config FromJson(const nlohmann::json& j);
};

struct Output {
  nn::Tensor trunk;         // C x T' x F'
  nn::Tensor frame_logits;  // 4 x T'
  nn::Tensor class_logits;  // 4, mean over frames
  nn::Tensor frame_real;    // T', sigmoid per frame
  nn::Tensor realness;      // 1, mean of frame_real
};

class Critic {
 public:
  explicit Critic(Config cfg = {});
  void Init(std::uint64_t seed);

  // z: T x 257.
  Output Forward(const nn::Tensor& z) const;
  // Softmax of the time-pooled class logits.
  nn::Tensor ClassProbabilities(const nn::Tensor& z) const;

  const Config& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  Config cfg_;
  nn::ParamSet params_;
};

}  // namespace maskse::critic

#endif  // MASKSE_CRITIC_H_
