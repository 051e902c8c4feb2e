#include "dinorade/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dinorade/errors.hpp"

namespace dinorade::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto node = std::make_shared<Node>();
  node->value.assign(numel(shape), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size())
    throw ConfigError("value count " + std::to_string(values.size()) + " does not match shape " +
                      shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(values.begin(), values.end());
  return Tensor(std::move(node));
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = requires_grad;
  return t;
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ConfigError("axis out of range for shape " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (size() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return {node_->grad.begin(), node_->grad.end()};
}

Tensor Tensor::detach() const { return from(shape(), {node_->value.begin(), node_->value.end()}); }

Tensor Tensor::reshape(Shape shape) const {
  if (numel(shape) != size())
    throw ConfigError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  const Tensor& self = *this;
  return make_result(std::move(shape), node_->value, {&self}, [in = node_](Node& out) {
    auto& g = in->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor make_result(Shape shape, Buffer value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
    if (any) {
      node->requires_grad = true;
      for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) node->parents.push_back(t->node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Tensor& root, std::span<const double> seed) {
  if (!root.requires_grad()) return;
  if (seed.size() != root.size()) throw ConfigError("backward seed size mismatch");
  Node* r = root.node().get();
  auto order = topo_order(r);
  auto& g = r->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

void backward(const Tensor& root) {
  if (root.size() != 1) throw ConfigError("backward() without seed needs a scalar root");
  const double one = 1.0;
  backward(root, std::span<const double>(&one, 1));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace dinorade::ag
