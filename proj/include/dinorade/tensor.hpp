#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 tensors.
//
// Layout convention throughout the library is channels-last, row-major:
// a feature map of shape {H, W, C} stores element (h, w, c) at (h*W + w)*C + c.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace dinorade::ag {

using Shape = std::vector<int>;

/// 64-byte aligned storage. Vectorized Eigen kernels peel loops according to
/// the buffer address, so unaligned buffers make float sums depend on where
/// malloc put them; fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into the parents' grads.
  std::function<void(Node&)> backward;

  Buffer& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  /// A leaf that accumulates gradients (trainable parameter or probed input).
  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  /// Gradient accumulated by backward(); zeros when nothing has flowed in.
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// Same values, cut from the graph.
  Tensor detach() const;
  Tensor reshape(Shape shape) const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Backpropagates from a scalar root (seed 1) into every reachable leaf.
void backward(const Tensor& root);
/// Backpropagates with an explicit upstream gradient of the root's shape.
void backward(const Tensor& root, std::span<const double> seed);

/// While alive, ops on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result. The backward closure is attached only when grad mode
/// is on and at least one input requires grad.
Tensor make_result(Shape shape, Buffer value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward);

}  // namespace dinorade::ag
