// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_NN_OPS_H_
#define MASKSE_NN_OPS_H_

#include <utility>
#include <vector>

#include "maskse/nn/tensor.h"

namespace maskse::nn {

// Elementwise, same shape.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, double s);
Tensor AddScalar(const Tensor& a, double s);

// x is C x H x W, f is 1 x H x W (or H x W); f is broadcast over channels.
Tensor MulChannelBroadcast(const Tensor& x, const Tensor& f);

Tensor Sigmoid(const Tensor& x);
Tensor Tanh(const Tensor& x);
Tensor Relu(const Tensor& x);
Tensor LeakyRelu(const Tensor& x, double slope);
Tensor Log(const Tensor& x);
Tensor Exp(const Tensor& x);
Tensor Abs(const Tensor& x);
// Clamp to [lo, hi]; the gradient is passed through only inside the range.
Tensor Clamp(const Tensor& x, double lo, double hi);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
// Mean of |a - b| over all elements.
Tensor MeanAbsDiff(const Tensor& a, const Tensor& b);

Tensor Reshape(const Tensor& x, const Shape& shape);
// Picks element i of x as a one-element tensor.
Tensor Element(const Tensor& x, std::size_t i);
// Sum of one-element tensors.
Tensor AddN(const std::vector<Tensor>& xs);

struct Conv2dGeometry {
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
};

// x: Cin x H x W, weight: Cout x Cin x KH x KW, bias: Cout (may be undefined).
Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dGeometry g);

// Adjoint of Conv2d in its input. x: Cin x H x W, weight: Cin x Cout x KH x KW.
// The output size (out_h, out_w) must be one that a Conv2d with the same
// geometry maps back to H x W.
Tensor ConvTranspose2d(const Tensor& x, const Tensor& weight,
                       const Tensor& bias, Conv2dGeometry g, int out_h,
                       int out_w);

int ConvOutputSize(int in, int kernel, int stride, int pad);

// Per-channel normalization over H x W with affine gamma/beta (length C).
Tensor InstanceNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps = 1e-5);

// Gated linear unit over the channel axis: x is 2C x H x W, returns
// x[:C] * sigmoid(x[C:]).
Tensor Glu(const Tensor& x);

// Concatenates C1 x H x W and C2 x H x W into (C1 + C2) x H x W.
Tensor ConcatChannels(const Tensor& a, const Tensor& b);

// Concatenates R x A and R x B into R x (A + B).
Tensor ConcatColumns(const Tensor& a, const Tensor& b);

// C x T x W -> T x (C * W), column index c * W + w.
Tensor ChannelsToFrames(const Tensor& x);

// rows x cols -> cols (mean over rows).
Tensor MeanRows(const Tensor& x);

// a: M x K, b: K x N.
Tensor MatMul(const Tensor& a, const Tensor& b);

// x: R x D, weight: O x D, bias: O -> R x O.
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Applies a fixed matrix m (rows_out x rows_in) on the left of x
// (rows_in x D).
Tensor ApplyConstantLeft(const std::vector<double>& m, int rows_out,
                         const Tensor& x);

// Over a 1-D vector.
Tensor LogSoftmax(const Tensor& x);
Tensor Softmax(const Tensor& x);

// Bidirectional LSTM, gates ordered (input, forget, cell, output).
// x: T x D. Forward and backward directions each take
// w_ih: 4H x D, w_hh: 4H x H, bias: 4H. Returns T x 2H with the forward
// direction's hidden state in the first H columns.
struct LstmWeights {
  Tensor w_ih, w_hh, bias;
};
Tensor BiLstm(const Tensor& x, const LstmWeights& forward,
              const LstmWeights& backward);

}  // namespace maskse::nn

#endif  // MASKSE_NN_OPS_H_
