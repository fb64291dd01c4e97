// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/nn/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "maskse/error.h"

namespace maskse::nn {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": shape mismatch " +
                       ShapeString(a.shape()) + " vs " +
                       ShapeString(b.shape()));
}

void RequireRank(const Tensor& x, int rank, const char* op) {
  if (x.rank() != rank)
    throw InvalidInput(std::string(op) + ": expected rank " +
                       std::to_string(rank) + ", got " +
                       ShapeString(x.shape()));
}

inline double SigmoidScalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

// y = f(x); dy/dx = df(x, y).
template <class F, class DF>
Tensor Unary(const Tensor& x, F f, DF df) {
  Buffer y(x.numel());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return MakeResult(x.shape(), std::move(y), {x}, [df](Node& self) {
    Node* px = self.parents[0].get();
    if (!px->requires_grad) return;
    auto& gx = px->Grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[i] * df(px->value[i], self.value[i]);
  });
}

void Im2Col(const double* x, int channels, int h, int w, int kh, int kw,
            const Conv2dGeometry& g, int oh, int ow, double* col) {
  const int plane = oh * ow;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        double* row = col + static_cast<std::size_t>((c * kh + ki) * kw + kj) *
                                plane;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * g.stride_h - g.pad_h + ki;
          double* out = row + oi * ow;
          if (ii < 0 || ii >= h) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          const double* in = x + (static_cast<std::size_t>(c) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * g.stride_w - g.pad_w + kj;
            out[oj] = (jj >= 0 && jj < w) ? in[jj] : 0.0;
          }
        }
      }
    }
  }
}

// Accumulating adjoint of Im2Col.
void Col2Im(const double* col, int channels, int h, int w, int kh, int kw,
            const Conv2dGeometry& g, int oh, int ow, double* x) {
  const int plane = oh * ow;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const double* row =
            col + static_cast<std::size_t>((c * kh + ki) * kw + kj) * plane;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * g.stride_h - g.pad_h + ki;
          if (ii < 0 || ii >= h) continue;
          const double* in = row + oi * ow;
          double* out = x + (static_cast<std::size_t>(c) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * g.stride_w - g.pad_w + kj;
            if (jj >= 0 && jj < w) out[jj] += in[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Add");
  Buffer y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) + b.at(i);
  return MakeResult(a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Sub");
  Buffer y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) - b.at(i);
  return MakeResult(a.shape(), std::move(y), {a, b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (int k = 0; k < 2; ++k) {
      Node* p = self.parents[k].get();
      if (!p->requires_grad) continue;
      auto& g = p->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Mul");
  Buffer y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * b.at(i);
  return MakeResult(a.shape(), std::move(y), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) {
      auto& g = pa->Grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->Grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor Scale(const Tensor& a, double s) {
  return Unary(
      a, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor AddScalar(const Tensor& a, double s) {
  return Unary(
      a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor MulChannelBroadcast(const Tensor& x, const Tensor& f) {
  RequireRank(x, 3, "MulChannelBroadcast");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  if (f.numel() != plane)
    throw InvalidInput("MulChannelBroadcast: filter " + ShapeString(f.shape()) +
                       " does not match plane of " + ShapeString(x.shape()));
  Buffer y(x.numel());
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i)
      y[ci * plane + i] = x.at(ci * plane + i) * f.at(i);
  return MakeResult(x.shape(), std::move(y), {x, f},
                    [c, plane](Node& self) {
                      Node* px = self.parents[0].get();
                      Node* pf = self.parents[1].get();
                      if (px->requires_grad) {
                        auto& g = px->Grad();
                        for (int ci = 0; ci < c; ++ci)
                          for (std::size_t i = 0; i < plane; ++i)
                            g[ci * plane + i] +=
                                self.grad[ci * plane + i] * pf->value[i];
                      }
                      if (pf->requires_grad) {
                        auto& g = pf->Grad();
                        for (int ci = 0; ci < c; ++ci)
                          for (std::size_t i = 0; i < plane; ++i)
                            g[i] += self.grad[ci * plane + i] *
                                    px->value[ci * plane + i];
                      }
                    });
}

Tensor Sigmoid(const Tensor& x) {
  return Unary(
      x, SigmoidScalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor Tanh(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor Relu(const Tensor& x) {
  return Unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor LeakyRelu(const Tensor& x, double slope) {
  return Unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor Log(const Tensor& x) {
  for (double v : x.value())
    if (!(v > 0)) throw InvalidInput("Log of non-positive value");
  return Unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor Exp(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Abs(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor Clamp(const Tensor& x, double lo, double hi) {
  return Unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor Sum(const Tensor& x) {
  double s = 0;
  for (double v : x.value()) s += v;
  return MakeResult({1}, {s}, {x}, [](Node& self) {
    auto& g = self.parents[0]->Grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor Mean(const Tensor& x) {
  if (x.numel() == 0) throw InvalidInput("Mean of empty tensor");
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor MeanAbsDiff(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "MeanAbsDiff");
  return Mean(Abs(Sub(a, b)));
}

Tensor Reshape(const Tensor& x, const Shape& shape) {
  if (NumElements(shape) != x.numel())
    throw InvalidInput("Reshape: " + ShapeString(x.shape()) + " -> " +
                       ShapeString(shape));
  return MakeResult(shape, x.value(), {x}, [](Node& self) {
    auto& g = self.parents[0]->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor Element(const Tensor& x, std::size_t i) {
  if (i >= x.numel()) throw InvalidInput("Element index out of range");
  return MakeResult({1}, {x.at(i)}, {x}, [i](Node& self) {
    self.parents[0]->Grad()[i] += self.grad[0];
  });
}

Tensor AddN(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidInput("AddN of nothing");
  double s = 0;
  for (const auto& x : xs) s += x.item();
  return MakeResult({1}, {s}, xs, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->Grad()[0] += self.grad[0];
  });
}

int ConvOutputSize(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0 || stride <= 0) return 0;
  return span / stride + 1;
}

Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dGeometry g) {
  RequireRank(x, 3, "Conv2d input");
  RequireRank(weight, 4, "Conv2d weight");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin)
    throw InvalidInput("Conv2d: weight " + ShapeString(weight.shape()) +
                       " vs input " + ShapeString(x.shape()));
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(cout))
    throw InvalidInput("Conv2d: bias size mismatch");
  const int oh = ConvOutputSize(h, kh, g.stride_h, g.pad_h);
  const int ow = ConvOutputSize(w, kw, g.stride_w, g.pad_w);
  if (oh <= 0 || ow <= 0)
    throw InvalidInput("Conv2d: input " + ShapeString(x.shape()) +
                       " too small for kernel");
  const int k = cin * kh * kw;
  const int p = oh * ow;
  auto col = std::make_shared<Buffer>(
      static_cast<std::size_t>(k) * p);
  Im2Col(x.data(), cin, h, w, kh, kw, g, oh, ow, col->data());

  Buffer y(static_cast<std::size_t>(cout) * p);
  MapMat out(y.data(), cout, p);
  out.noalias() = CMapMat(weight.data(), cout, k) * CMapMat(col->data(), k, p);
  if (bias.defined())
    for (int c = 0; c < cout; ++c) out.row(c).array() += bias.at(c);

  std::vector<Tensor> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);
  return MakeResult(
      {cout, oh, ow}, std::move(y), parents,
      [=](Node& self) {
        Node* px = self.parents[0].get();
        Node* pw = self.parents[1].get();
        CMapMat gout(self.grad.data(), cout, p);
        if (pw->requires_grad) {
          MapMat gw(pw->Grad().data(), cout, k);
          gw.noalias() += gout * CMapMat(col->data(), k, p).transpose();
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->Grad();
          for (int c = 0; c < cout; ++c) gb[c] += gout.row(c).sum();
        }
        if (px->requires_grad) {
          Buffer gcol(static_cast<std::size_t>(k) * p);
          MapMat(gcol.data(), k, p).noalias() =
              CMapMat(pw->value.data(), cout, k).transpose() * gout;
          Col2Im(gcol.data(), cin, h, w, kh, kw, g, oh, ow,
                 px->Grad().data());
        }
      });
}

Tensor ConvTranspose2d(const Tensor& x, const Tensor& weight,
                       const Tensor& bias, Conv2dGeometry g, int out_h,
                       int out_w) {
  RequireRank(x, 3, "ConvTranspose2d input");
  RequireRank(weight, 4, "ConvTranspose2d weight");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != cin)
    throw InvalidInput("ConvTranspose2d: weight " +
                       ShapeString(weight.shape()) + " vs input " +
                       ShapeString(x.shape()));
  if (ConvOutputSize(out_h, kh, g.stride_h, g.pad_h) != h ||
      ConvOutputSize(out_w, kw, g.stride_w, g.pad_w) != w)
    throw InvalidInput("ConvTranspose2d: output size " +
                       std::to_string(out_h) + "x" + std::to_string(out_w) +
                       " inconsistent with input " + ShapeString(x.shape()));
  const int k = cout * kh * kw;
  const int p = h * w;
  Buffer col(static_cast<std::size_t>(k) * p);
  MapMat(col.data(), k, p).noalias() =
      CMapMat(weight.data(), cin, k).transpose() * CMapMat(x.data(), cin, p);
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  Buffer y(cout * plane, 0.0);
  Col2Im(col.data(), cout, out_h, out_w, kh, kw, g, h, w, y.data());
  if (bias.defined()) {
    if (bias.numel() != static_cast<std::size_t>(cout))
      throw InvalidInput("ConvTranspose2d: bias size mismatch");
    for (int c = 0; c < cout; ++c)
      for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] += bias.at(c);
  }
  std::vector<Tensor> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);
  return MakeResult(
      {cout, out_h, out_w}, std::move(y), parents, [=](Node& self) {
        Node* px = self.parents[0].get();
        Node* pw = self.parents[1].get();
        Buffer gcol(static_cast<std::size_t>(k) * p);
        Im2Col(self.grad.data(), cout, out_h, out_w, kh, kw, g, h, w,
               gcol.data());
        CMapMat gc(gcol.data(), k, p);
        if (px->requires_grad) {
          MapMat gx(px->Grad().data(), cin, p);
          gx.noalias() += CMapMat(pw->value.data(), cin, k) * gc;
        }
        if (pw->requires_grad) {
          MapMat gw(pw->Grad().data(), cin, k);
          gw.noalias() += CMapMat(px->value.data(), cin, p) * gc.transpose();
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->Grad();
          for (int c = 0; c < cout; ++c) {
            double s = 0;
            for (std::size_t i = 0; i < plane; ++i)
              s += self.grad[c * plane + i];
            gb[c] += s;
          }
        }
      });
}

Tensor InstanceNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps) {
  RequireRank(x, 3, "InstanceNorm");
  const int c = x.dim(0);
  const std::size_t n = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  if (gamma.numel() != static_cast<std::size_t>(c) ||
      beta.numel() != static_cast<std::size_t>(c))
    throw InvalidInput("InstanceNorm: affine size mismatch");
  auto xhat = std::make_shared<Buffer>(x.numel());
  auto inv_std = std::make_shared<Buffer>(c);
  Buffer y(x.numel());
  for (int ci = 0; ci < c; ++ci) {
    const double* xv = x.data() + ci * n;
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += xv[i];
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (xv[i] - mean) * (xv[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ci] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double xh = (xv[i] - mean) * is;
      (*xhat)[ci * n + i] = xh;
      y[ci * n + i] = gamma.at(ci) * xh + beta.at(ci);
    }
  }
  return MakeResult(x.shape(), std::move(y), {x, gamma, beta},
                    [=](Node& self) {
                      Node* px = self.parents[0].get();
                      Node* pg = self.parents[1].get();
                      Node* pb = self.parents[2].get();
                      for (int ci = 0; ci < c; ++ci) {
                        const double* gy = self.grad.data() + ci * n;
                        const double* xh = xhat->data() + ci * n;
                        double sum_g = 0, sum_gx = 0;
                        for (std::size_t i = 0; i < n; ++i) {
                          sum_g += gy[i];
                          sum_gx += gy[i] * xh[i];
                        }
                        if (pg->requires_grad) pg->Grad()[ci] += sum_gx;
                        if (pb->requires_grad) pb->Grad()[ci] += sum_g;
                        if (px->requires_grad) {
                          const double gam = pg->value[ci];
                          const double scale =
                              gam * (*inv_std)[ci] / static_cast<double>(n);
                          double* gx = px->Grad().data() + ci * n;
                          for (std::size_t i = 0; i < n; ++i)
                            gx[i] += scale * (static_cast<double>(n) * gy[i] -
                                              sum_g - xh[i] * sum_gx);
                        }
                      }
                    });
}

Tensor Glu(const Tensor& x) {
  RequireRank(x, 3, "Glu");
  if (x.dim(0) % 2 != 0) throw InvalidInput("Glu: odd channel count");
  const int c = x.dim(0) / 2;
  const std::size_t half = static_cast<std::size_t>(c) * x.dim(1) * x.dim(2);
  auto gate = std::make_shared<Buffer>(half);
  Buffer y(half);
  for (std::size_t i = 0; i < half; ++i) {
    (*gate)[i] = SigmoidScalar(x.at(half + i));
    y[i] = x.at(i) * (*gate)[i];
  }
  return MakeResult({c, x.dim(1), x.dim(2)}, std::move(y), {x},
                    [=](Node& self) {
                      Node* px = self.parents[0].get();
                      auto& gx = px->Grad();
                      for (std::size_t i = 0; i < half; ++i) {
                        const double s = (*gate)[i];
                        gx[i] += self.grad[i] * s;
                        gx[half + i] +=
                            self.grad[i] * px->value[i] * s * (1.0 - s);
                      }
                    });
}

Tensor ConcatChannels(const Tensor& a, const Tensor& b) {
  RequireRank(a, 3, "ConcatChannels");
  RequireRank(b, 3, "ConcatChannels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw InvalidInput("ConcatChannels: plane mismatch " +
                       ShapeString(a.shape()) + " vs " +
                       ShapeString(b.shape()));
  Buffer y(a.value());
  y.insert(y.end(), b.value().begin(), b.value().end());
  const std::size_t na = a.numel();
  return MakeResult({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(y),
                    {a, b}, [na](Node& self) {
                      Node* pa = self.parents[0].get();
                      Node* pb = self.parents[1].get();
                      if (pa->requires_grad) {
                        auto& g = pa->Grad();
                        for (std::size_t i = 0; i < na; ++i)
                          g[i] += self.grad[i];
                      }
                      if (pb->requires_grad) {
                        auto& g = pb->Grad();
                        for (std::size_t i = 0; i < g.size(); ++i)
                          g[i] += self.grad[na + i];
                      }
                    });
}

Tensor ConcatColumns(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "ConcatColumns");
  RequireRank(b, 2, "ConcatColumns");
  if (a.dim(0) != b.dim(0))
    throw InvalidInput("ConcatColumns: row mismatch " +
                       ShapeString(a.shape()) + " vs " +
                       ShapeString(b.shape()));
  const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Buffer y(static_cast<std::size_t>(rows) * (ca + cb));
  for (int r = 0; r < rows; ++r) {
    std::copy_n(a.data() + r * ca, ca, y.data() + r * (ca + cb));
    std::copy_n(b.data() + r * cb, cb, y.data() + r * (ca + cb) + ca);
  }
  return MakeResult({rows, ca + cb}, std::move(y), {a, b},
                    [=](Node& self) {
                      Node* pa = self.parents[0].get();
                      Node* pb = self.parents[1].get();
                      for (int r = 0; r < rows; ++r) {
                        const double* g = self.grad.data() + r * (ca + cb);
                        if (pa->requires_grad) {
                          double* ga = pa->Grad().data() + r * ca;
                          for (int i = 0; i < ca; ++i) ga[i] += g[i];
                        }
                        if (pb->requires_grad) {
                          double* gb = pb->Grad().data() + r * cb;
                          for (int i = 0; i < cb; ++i) gb[i] += g[ca + i];
                        }
                      }
                    });
}

Tensor ChannelsToFrames(const Tensor& x) {
  RequireRank(x, 3, "ChannelsToFrames");
  const int c = x.dim(0), t = x.dim(1), w = x.dim(2);
  Buffer y(x.numel());
  for (int ci = 0; ci < c; ++ci)
    for (int ti = 0; ti < t; ++ti)
      for (int wi = 0; wi < w; ++wi)
        y[(static_cast<std::size_t>(ti) * c + ci) * w + wi] =
            x.at((static_cast<std::size_t>(ci) * t + ti) * w + wi);
  return MakeResult({t, c * w}, std::move(y), {x}, [=](Node& self) {
    auto& g = self.parents[0]->Grad();
    for (int ci = 0; ci < c; ++ci)
      for (int ti = 0; ti < t; ++ti)
        for (int wi = 0; wi < w; ++wi)
          g[(static_cast<std::size_t>(ci) * t + ti) * w + wi] +=
              self.grad[(static_cast<std::size_t>(ti) * c + ci) * w + wi];
  });
}

Tensor MeanRows(const Tensor& x) {
  RequireRank(x, 2, "MeanRows");
  const int r = x.dim(0), c = x.dim(1);
  if (r == 0) throw InvalidInput("MeanRows of zero rows");
  Buffer y(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[j] += x.at(i * c + j);
  for (auto& v : y) v /= r;
  return MakeResult({c}, std::move(y), {x}, [r, c](Node& self) {
    auto& g = self.parents[0]->Grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g[i * c + j] += self.grad[j] / r;
  });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "MatMul");
  RequireRank(b, 2, "MatMul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw InvalidInput("MatMul: " + ShapeString(a.shape()) + " x " +
                       ShapeString(b.shape()));
  Buffer y(static_cast<std::size_t>(m) * n);
  MapMat(y.data(), m, n).noalias() =
      CMapMat(a.data(), m, k) * CMapMat(b.data(), k, n);
  return MakeResult({m, n}, std::move(y), {a, b}, [=](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    CMapMat g(self.grad.data(), m, n);
    if (pa->requires_grad)
      MapMat(pa->Grad().data(), m, k).noalias() +=
          g * CMapMat(pb->value.data(), k, n).transpose();
    if (pb->requires_grad)
      MapMat(pb->Grad().data(), k, n).noalias() +=
          CMapMat(pa->value.data(), m, k).transpose() * g;
  });
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  RequireRank(x, 2, "Linear input");
  RequireRank(weight, 2, "Linear weight");
  const int r = x.dim(0), d = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != d)
    throw InvalidInput("Linear: weight " + ShapeString(weight.shape()) +
                       " vs input " + ShapeString(x.shape()));
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(o))
    throw InvalidInput("Linear: bias size mismatch");
  Buffer y(static_cast<std::size_t>(r) * o);
  MapMat out(y.data(), r, o);
  out.noalias() =
      CMapMat(x.data(), r, d) * CMapMat(weight.data(), o, d).transpose();
  if (bias.defined())
    out.rowwise() += CMapVec(bias.data(), o).transpose();
  std::vector<Tensor> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);
  return MakeResult({r, o}, std::move(y), parents, [=](Node& self) {
    Node* px = self.parents[0].get();
    Node* pw = self.parents[1].get();
    CMapMat g(self.grad.data(), r, o);
    if (px->requires_grad)
      MapMat(px->Grad().data(), r, d).noalias() +=
          g * CMapMat(pw->value.data(), o, d);
    if (pw->requires_grad)
      MapMat(pw->Grad().data(), o, d).noalias() +=
          g.transpose() * CMapMat(px->value.data(), r, d);
    if (self.parents.size() > 2 && self.parents[2]->requires_grad)
      MapVec(self.parents[2]->Grad().data(), o) += g.colwise().sum().transpose();
  });
}

Tensor ApplyConstantLeft(const std::vector<double>& m, int rows_out,
                         const Tensor& x) {
  RequireRank(x, 2, "ApplyConstantLeft");
  const int rows_in = x.dim(0), d = x.dim(1);
  if (m.size() != static_cast<std::size_t>(rows_out) * rows_in)
    throw InvalidInput("ApplyConstantLeft: matrix size mismatch");
  auto mat = std::make_shared<Buffer>(m.begin(), m.end());
  Buffer y(static_cast<std::size_t>(rows_out) * d);
  MapMat(y.data(), rows_out, d).noalias() =
      CMapMat(mat->data(), rows_out, rows_in) * CMapMat(x.data(), rows_in, d);
  return MakeResult({rows_out, d}, std::move(y), {x}, [=](Node& self) {
    MapMat(self.parents[0]->Grad().data(), rows_in, d).noalias() +=
        CMapMat(mat->data(), rows_out, rows_in).transpose() *
        CMapMat(self.grad.data(), rows_out, d);
  });
}

Tensor LogSoftmax(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw InvalidInput("LogSoftmax of empty tensor");
  double mx = *std::max_element(x.value().begin(), x.value().end());
  double s = 0;
  for (double v : x.value()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  Buffer y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x.at(i) - lse;
  return MakeResult(x.shape(), std::move(y), {x}, [n](Node& self) {
    double gs = 0;
    for (double g : self.grad) gs += g;
    auto& gx = self.parents[0]->Grad();
    for (std::size_t i = 0; i < n; ++i)
      gx[i] += self.grad[i] - std::exp(self.value[i]) * gs;
  });
}

Tensor Softmax(const Tensor& x) { return Exp(LogSoftmax(x)); }

Tensor BiLstm(const Tensor& x, const LstmWeights& fw, const LstmWeights& bw) {
  RequireRank(x, 2, "BiLstm");
  const int t_len = x.dim(0), d = x.dim(1);
  const int hid = fw.w_hh.dim(1);
  for (const LstmWeights* lw : {&fw, &bw}) {
    if (lw->w_ih.shape() != Shape{4 * hid, d} ||
        lw->w_hh.shape() != Shape{4 * hid, hid} ||
        lw->bias.numel() != static_cast<std::size_t>(4 * hid))
      throw InvalidInput("BiLstm: weight shapes inconsistent with input " +
                         ShapeString(x.shape()));
  }
  if (t_len == 0) throw InvalidInput("BiLstm: empty sequence");

  // Per direction: gate activations (T x 4H) and cell states (T x H).
  struct Cache {
    RowMat gates;
    RowMat cell;
    RowMat hidden;
  };
  auto caches = std::make_shared<std::array<Cache, 2>>();
  Buffer y(static_cast<std::size_t>(t_len) * 2 * hid);
  MapMat out(y.data(), t_len, 2 * hid);
  CMapMat xm(x.data(), t_len, d);

  const LstmWeights* dirs[2] = {&fw, &bw};
  for (int dir = 0; dir < 2; ++dir) {
    const LstmWeights& lw = *dirs[dir];
    CMapMat wih(lw.w_ih.data(), 4 * hid, d);
    CMapMat whh(lw.w_hh.data(), 4 * hid, hid);
    CMapVec b(lw.bias.data(), 4 * hid);
    RowMat pre = xm * wih.transpose();
    pre.rowwise() += b.transpose();
    Cache& cache = (*caches)[dir];
    cache.gates.resize(t_len, 4 * hid);
    cache.cell.resize(t_len, hid);
    cache.hidden.resize(t_len, hid);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(hid);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(hid);
    for (int s = 0; s < t_len; ++s) {
      const int t = dir == 0 ? s : t_len - 1 - s;
      Eigen::VectorXd z = pre.row(t).transpose() + whh * h;
      for (int j = 0; j < hid; ++j) {
        const double ig = SigmoidScalar(z[j]);
        const double fg = SigmoidScalar(z[hid + j]);
        const double gg = std::tanh(z[2 * hid + j]);
        const double og = SigmoidScalar(z[3 * hid + j]);
        c[j] = fg * c[j] + ig * gg;
        h[j] = og * std::tanh(c[j]);
        cache.gates(t, j) = ig;
        cache.gates(t, hid + j) = fg;
        cache.gates(t, 2 * hid + j) = gg;
        cache.gates(t, 3 * hid + j) = og;
      }
      cache.cell.row(t) = c.transpose();
      cache.hidden.row(t) = h.transpose();
      out.block(t, dir * hid, 1, hid) = h.transpose();
    }
  }

  return MakeResult(
      {t_len, 2 * hid}, std::move(y),
      {x, fw.w_ih, fw.w_hh, fw.bias, bw.w_ih, bw.w_hh, bw.bias},
      [=](Node& self) {
        Node* px = self.parents[0].get();
        CMapMat gout(self.grad.data(), t_len, 2 * hid);
        CMapMat xv(px->value.data(), t_len, d);
        for (int dir = 0; dir < 2; ++dir) {
          Node* pih = self.parents[1 + 3 * dir].get();
          Node* phh = self.parents[2 + 3 * dir].get();
          Node* pb = self.parents[3 + 3 * dir].get();
          const Cache& cache = (*caches)[dir];
          CMapMat whh(phh->value.data(), 4 * hid, hid);
          RowMat dz(t_len, 4 * hid);
          RowMat gwhh = RowMat::Zero(4 * hid, hid);
          Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hid);
          Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(hid);
          for (int s = t_len - 1; s >= 0; --s) {
            const int t = dir == 0 ? s : t_len - 1 - s;
            const int tp = dir == 0 ? t - 1 : t + 1;  // previous step's time
            const bool has_prev = s > 0;
            Eigen::VectorXd dzt(4 * hid);
            for (int j = 0; j < hid; ++j) {
              const double ig = cache.gates(t, j);
              const double fg = cache.gates(t, hid + j);
              const double gg = cache.gates(t, 2 * hid + j);
              const double og = cache.gates(t, 3 * hid + j);
              const double ct = cache.cell(t, j);
              const double cprev = has_prev ? cache.cell(tp, j) : 0.0;
              const double tc = std::tanh(ct);
              const double dh = gout(t, dir * hid + j) + dh_next[j];
              const double dout = dh * tc;
              const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
              dzt[j] = dc * gg * ig * (1.0 - ig);
              dzt[hid + j] = dc * cprev * fg * (1.0 - fg);
              dzt[2 * hid + j] = dc * ig * (1.0 - gg * gg);
              dzt[3 * hid + j] = dout * og * (1.0 - og);
              dc_next[j] = dc * fg;
            }
            dz.row(t) = dzt.transpose();
            dh_next = whh.transpose() * dzt;
            if (has_prev && phh->requires_grad)
              gwhh.noalias() += dzt * cache.hidden.row(tp);
          }
          if (pih->requires_grad)
            MapMat(pih->Grad().data(), 4 * hid, d).noalias() +=
                dz.transpose() * xv;
          if (phh->requires_grad)
            MapMat(phh->Grad().data(), 4 * hid, hid) += gwhh;
          if (pb->requires_grad)
            MapVec(pb->Grad().data(), 4 * hid) += dz.colwise().sum().transpose();
          if (px->requires_grad)
            MapMat(px->Grad().data(), t_len, d).noalias() +=
                dz * CMapMat(pih->value.data(), 4 * hid, d);
        }
      });
}

}  // namespace maskse::nn
