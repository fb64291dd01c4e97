// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Reverse-mode automatic differentiation over dense row-major float64 arrays.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record a backward closure; Tensor::Backward() walks the
// recorded graph in reverse topological order and accumulates gradients into
// every node that requires them. Images are laid out as C x H x W, matrices as
// rows x cols. There is no batch axis: minibatches are loops whose losses are
// averaged.

#ifndef MASKSE_NN_TENSOR_H_
#define MASKSE_NN_TENSOR_H_

#include <cstddef>
#include <cstdlib>
#include <functional>
#include <memory>
#include <new>
#include <string>
#include <vector>

namespace maskse::nn {

// Over-aligned allocator. Vectorized kernels peel loops by address, so with
// malloc's 16-byte alignment two identical runs can round differently.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, bytes ? bytes : kAlign);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

using Shape = std::vector<int>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

struct Node {
  Buffer value;
  Buffer grad;  // empty until something flows into it
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  Buffer& Grad();  // allocates zeros on first use
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor Zeros(const Shape& shape, bool requires_grad = false);
  static Tensor Full(const Shape& shape, double fill);
  static Tensor FromData(const Shape& shape, const std::vector<double>& data,
                         bool requires_grad = false);
  static Tensor FromBuffer(const Shape& shape, Buffer data,
                           bool requires_grad = false);
  static Tensor Scalar(double v) { return FromData({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->value.size(); }

  const Buffer& value() const { return node_->value; }
  Buffer& mutable_value() { return node_->value; }
  // Copy of the value as a plain vector.
  std::vector<double> values() const { return {value().begin(), value().end()}; }
  const double* data() const { return node_->value.data(); }
  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  // Gradient of the last Backward() w.r.t. this tensor; zeros if none flowed.
  std::vector<double> grad() const;
  void ZeroGrad() { node_->grad.clear(); }

  // Seeds d(this)/d(this) = 1 (this must hold one element) and propagates.
  void Backward() const;
  // Same as Backward() with an explicit upstream gradient.
  void Backward(const std::vector<double>& seed) const;

  // Copy of the value with no history.
  Tensor Detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive on a thread, new operations record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// Builds an op result. If grad mode is on and any parent requires grad, the
// node keeps its parents and `backward`; the closure receives the result node
// and must accumulate into parents' Grad().
Tensor MakeResult(Shape shape, Buffer value,
                  std::vector<Tensor> parents,
                  std::function<void(Node& self)> backward);

}  // namespace maskse::nn

#endif  // MASKSE_NN_TENSOR_H_
