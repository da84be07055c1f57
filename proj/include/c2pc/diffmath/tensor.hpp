#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace c2pc::dm {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Checked mode rejects NaN/Inf at tensor construction and after every op. It is a
/// process-wide switch, on by default.
void set_checked_mode(bool enabled);
bool checked_mode();

/// Gradient recording for the current thread. While disabled, ops produce constant
/// tensors and keep no graph.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor;

/// Backward closure of an op: receives the op's output value and gradient and
/// accumulates into its inputs' gradient buffers.
using BackwardFn = std::function<void(std::span<const double> out_value, std::span<const double> out_grad)>;

/// Dense row-major float64 tensor with reverse-mode gradient support.
///
/// A Tensor is a shared handle: copies alias the same node. Leaves created with
/// requires_grad are parameters; tensors produced by ops while grad recording is on
/// remember their inputs and a backward closure. backward() runs the closures in reverse
/// creation order, which is a topological order of the graph and makes accumulation
/// order (and thus the result) reproducible.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds the result of an op. `inputs` are recorded as graph parents only when
  /// grad recording is enabled and at least one of them requires grad.
  static Tensor make_op(std::string_view op, Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Intended for parameter updates and test perturbations;
  /// never mutate a tensor that is part of a live graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient buffer (zero-filled and allocated on first access).
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Seeds d(this)/d(this) = 1.
  void backward() const;

  /// Constant copy sharing no graph.
  Tensor detach() const;

  std::vector<double> to_vector() const;
  std::uint64_t sequence() const;

 private:
  struct Node;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  Node& node() const;

  std::shared_ptr<Node> node_;
};

}  // namespace c2pc::dm
