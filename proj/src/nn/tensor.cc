// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/nn/tensor.h"

#include <sstream>
#include <unordered_set>

#include "maskse/error.h"

namespace maskse::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Buffer& Node::Grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::Zeros(const Shape& shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(NumElements(shape), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::Full(const Shape& shape, double fill) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(NumElements(shape), fill);
  return Tensor(std::move(n));
}

Tensor Tensor::FromData(const Shape& shape, const std::vector<double>& data,
                        bool requires_grad) {
  return FromBuffer(shape, Buffer(data.begin(), data.end()), requires_grad);
}

Tensor Tensor::FromBuffer(const Shape& shape, Buffer data, bool requires_grad) {
  if (data.size() != NumElements(shape))
    throw InvalidInput("data size " + std::to_string(data.size()) +
                       " does not match shape " + ShapeString(shape));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw InvalidInput("axis out of range");
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1)
    throw InvalidInput("item() on tensor of shape " + ShapeString(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return {node_->grad.begin(), node_->grad.end()};
}

void Tensor::Backward() const {
  if (numel() != 1)
    throw InvalidInput("Backward() without seed needs a scalar, got " +
                       ShapeString(shape()));
  Backward({1.0});
}

void Tensor::Backward(const std::vector<double>& seed) const {
  if (seed.size() != numel()) throw InvalidInput("seed size mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  auto& g = node_->Grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

Tensor Tensor::Detach() const {
  return FromBuffer(shape(), value(), false);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }

Tensor MakeResult(Shape shape, Buffer value,
                  std::vector<Tensor> parents,
                  std::function<void(Node& self)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (NumElements(n->shape) != n->value.size())
    throw InvalidInput("op produced value inconsistent with its shape");
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.shared());
    Node* self = n.get();
    n->backward = [self, fn = std::move(backward)]() { fn(*self); };
  }
  return Tensor(std::move(n));
}

}  // namespace maskse::nn
