// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Attribute-conditioned LPS-to-LPS generator: convolutional encoder,
// residual bottleneck and transposed-convolution decoder produce X_hat; a
// small attention path turns the input into a (0, 1) filter F; the output
// convolution maps X_hat * F to one channel.
//
// The network operates on per-bin normalized LPS (see FeatureNorm); the
// trainer and Enhance() convert at the boundary.

#ifndef MASKSE_GENERATOR_H_
#define MASKSE_GENERATOR_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "maskse/condition.h"
#include "maskse/nn/params.h"
#include "maskse/nn/tensor.h"

namespace maskse {

// One-hot condition code.
struct AttributeVector {
  std::vector<double> code;  // length kNumConditions

  static AttributeVector For(Condition c);
  Condition condition() const;  // throws InvalidInput unless one-hot
};

// Per-frequency-bin LPS statistics.
struct FeatureNorm {
  std::vector<double> mean;  // 257
  std::vector<double> std;   // 257

  static FeatureNorm Identity();
  // Statistics over all frames of the given T x 257 matrices.
  static FeatureNorm Fit(const std::vector<std::vector<double>>& lps_mats);
  nn::Tensor Normalize(const nn::Tensor& lps) const;    // T x 257
  nn::Tensor Denormalize(const nn::Tensor& z) const;    // T x 257
  nlohmann::json ToJson() const;
  static FeatureNorm FromJson(const nlohmann::json& j);
};

}  // namespace maskse

namespace maskse::generator {

struct Config {
  std::vector<int> encoder_channels{32, 64, 128};
  std::vector<int> encoder_strides{1, 2, 2};
  int encoder_kernel = 5;
  int residual_blocks = 4;
  int residual_kernel = 3;
  // One entry per stride-2 encoder layer after the first, in decoding order.
  std::vector<int> decoder_channels{64, 32};
  int decoder_kernel = 5;
  std::vector<int> attention_channels{16, 16};  // followed by a 1-channel conv
  int attention_kernel = 3;
  int output_kernel = 3;
  bool attention = true;  // false: no attention path (F = 1)

  // Smaller widths for CPU experiments.
  static Config Desk();
  void Validate() const;
  nlohmann::json ToJson() const;
  static Config FromJson(const nlohmann::json& j);
};

class Generator {
 public:
  explicit Generator(Config cfg = {});

  // Deterministic for a fixed seed.
  void Init(std::uint64_t seed);

  struct Trace {
    nn::Tensor x_hat;     // C x T x 257, decoder output
    nn::Tensor filter;    // 1 x T x 257, undefined without attention
    nn::Tensor attended;  // X_hat * F
    nn::Tensor output;    // T x 257
  };
  struct Options {
    // Replace F by ones while keeping the attention parameters.
    bool force_unit_filter = false;
  };

  // y: T x 257 (normalized LPS).
  nn::Tensor Forward(const nn::Tensor& y, const AttributeVector& t) const;
  Trace ForwardTrace(const nn::Tensor& y, const AttributeVector& t,
                     Options opt) const;
  // F alone; requires the attention path.
  nn::Tensor Attention(const nn::Tensor& y) const;
  // Output convolution applied to a C x T x 257 map.
  nn::Tensor OutputConv(const nn::Tensor& x) const;

  const Config& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  std::size_t ParameterCount() const { return params_.Count(); }

 private:
  Config cfg_;
  nn::ParamSet params_;
};

}  // namespace maskse::generator

#endif  // MASKSE_GENERATOR_H_
