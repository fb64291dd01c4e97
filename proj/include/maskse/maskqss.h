// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// CNN-BLSTM quality predictor. CB1 reads log scattering coefficients, CB2
// reads Hann-windowed waveform frames; each path is flattened per frame and
// projected to 448 dims, the two are concatenated (896), and a BLSTM with a
// dense head emits one score per frame. The utterance score is their mean.

#ifndef MASKSE_MASKQSS_H_
#define MASKSE_MASKQSS_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "maskse/nn/params.h"
#include "maskse/nn/tensor.h"
#include "maskse/signal.h"

namespace maskse::maskqss {

struct ConvLayer {
  int channels = 16;
  int kernel = 3;
  int stride_time = 1;
  int stride_freq = 1;
  bool operator==(const ConvLayer&) const = default;
};

// The nine-layer stack shared by both convolutional blocks.
std::vector<ConvLayer> DefaultConvStack();

// Width left after the stack for an input of width `width`.
std::vector<int> StackWidths(const std::vector<ConvLayer>& stack, int width);

struct Config {
  std::vector<ConvLayer> conv_stack = DefaultConvStack();
  int projection = 448;  // per path
  int lstm_hidden = 256;  // per direction
  int dense = 128;
  double output_bias = 3.0;
  signal::ScatterConfig scatter;  // log-compressed by default

  Config() { scatter.log_compress = true; }
  int FusedWidth() const { return 2 * projection; }
  void Validate() const;
  nlohmann::json ToJson() const;
  static Config FromJson(const nlohmann::json& j);
};

struct MosEstimate {
  std::vector<double> frame_scores;
  double utterance_score = 0;
};

// Fixed inputs derived from a waveform.
struct Features {
  nn::Tensor scatter;             // T' x K
  nn::Tensor frames;              // T x 512
  std::vector<double> resampler;  // T x T'
};

class MaskQss {
 public:
  explicit MaskQss(Config cfg = {});
  void Init(std::uint64_t seed);

  Features Extract(const signal::Waveform& w) const;

  struct Trace {
    nn::Tensor cb1;          // 128 x T' x W1
    nn::Tensor cb2;          // 128 x T x W2
    nn::Tensor fused;        // T x 896
    nn::Tensor frame_scores; // T x 1
    nn::Tensor score;        // 1
  };
  Trace ForwardTrace(const Features& f) const;
  // Differentiable in the waveform tensor (1-D).
  Trace ForwardWave(const nn::Tensor& wave) const;
  nn::Tensor Forward(const Features& f) const { return ForwardTrace(f).score; }

  MosEstimate Predict(const signal::Waveform& w) const;

  // Runs one block on a 1 x H x W map.
  nn::Tensor ConvBlock(const nn::Tensor& x, const char* block) const;

  const Config& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  Trace Head(const nn::Tensor& scatter, const nn::Tensor& frames,
             const std::vector<double>& resampler) const;

  Config cfg_;
  nn::ParamSet params_;
};

}  // namespace maskse::maskqss

#endif  // MASKSE_MASKQSS_H_
