#include "c2pc/diffmath/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <bit>
#include <cstdint>
#include <unordered_set>

#include "c2pc/errors.hpp"

namespace c2pc::dm {
namespace {

std::atomic<bool> g_checked{true};
std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

void check_finite(std::string_view what, std::span<const double> values) {
  // Branch-free scan (vectorises); locate the offending entry only on failure.
  constexpr std::uint64_t kExp = 0x7ff0000000000000ull;
  std::uint64_t bad = 0;
  for (double v : values) bad |= (std::bit_cast<std::uint64_t>(v) & kExp) == kExp;
  if (!bad) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "non-finite value in " << what << " at flat index " << i;
      throw NonFiniteError(os.str());
    }
  }
}

}  // namespace

struct Tensor::Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void set_checked_mode(bool enabled) { g_checked = enabled; }
bool checked_mode() { return g_checked; }
bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = dm::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (dm::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  if (g_checked) check_finite("tensor construction", values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->sequence = g_sequence.fetch_add(1);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::make_op(std::string_view op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                       BackwardFn backward) {
  if (dm::numel(shape) != values.size()) {
    throw ShapeError(std::string(op) + ": result shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  if (g_checked) check_finite(op, values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->sequence = g_sequence.fetch_add(1);
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      for (auto& in : inputs) {
        if (in.defined()) node->parents.push_back(in.node_);
      }
    }
  }
  return Tensor(std::move(node));
}

Tensor::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().value.size(); }
std::span<const double> Tensor::data() const { return node().value; }
std::span<double> Tensor::mutable_data() { return node().value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return node().value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
void Tensor::set_requires_grad(bool value) { node().requires_grad = value; }
bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<double> Tensor::grad() {
  auto& n = node();
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<const double> Tensor::grad() const {
  auto& n = node();
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tensor::backward() const {
  auto& root = node();
  if (root.value.size() != 1) throw ShapeError("backward() needs a scalar, got " + to_string(root.shape));
  if (!root.requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{&root};
  seen.insert(&root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Parents are always created before their children.
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->sequence > b->sequence; });

  if (root.grad.empty()) root.grad.assign(1, 0.0);
  root.grad[0] += 1.0;
  for (Node* n : order) {
    if (!n->backward || n->grad.empty()) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad && p->grad.empty()) p->grad.assign(p->value.size(), 0.0);
    }
    n->backward(n->value, n->grad);
  }
}

Tensor Tensor::detach() const {
  return from(shape(), node().value, false);
}

std::vector<double> Tensor::to_vector() const { return node().value; }
std::uint64_t Tensor::sequence() const { return node().sequence; }

}  // namespace c2pc::dm
