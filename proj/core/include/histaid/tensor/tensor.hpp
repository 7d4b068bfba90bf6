#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace histaid::tensor {

using Shape = std::vector<std::size_t>;

// Boolean mask stored one byte per entry (1 = keep, 0 = masked out).
using Mask = std::vector<std::uint8_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl;

// Backward rule of a recorded operation. Receives the gradient of the loss
// with respect to the operation's output (and the output values) and
// accumulates into its inputs.
using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<const double> out)>;

// One recorded operation: the inputs it read and how to push gradients back.
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  std::span<double> grad_buffer();
};

// Dense row-major 64-bit tensor with optional gradient.
//
// Tensor is a cheap handle; copies share storage. Values are immutable once an
// operation produced them. Leaves (parameters) may be updated in place through
// mutable_values(), which is how optimizers step.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t dim() const { return shape().size(); }
  // Product of all leading dimensions; cols() is the last dimension.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  // Gradient values; a zero vector when nothing has accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  // Same values, cut from any recorded history.
  Tensor detach() const;
  // Deep copy of values as a fresh leaf.
  Tensor clone() const;

  bool is_leaf() const;
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Creates the output of an operation and records it when any input requires a
// gradient. `backward` is only retained in that case.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

// Adds `delta` into the gradient of `t` if it participates in differentiation.
void accumulate_grad(const Tensor& t, std::span<const double> delta);

// Topologically ordered list of the operations that produced a loss.
class Tape {
 public:
  static Tape record(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  // Every recorded operation appears after all operations producing its inputs.
  bool topological() const;
  const std::vector<TensorImpl*>& order() const { return order_; }

  // Seeds d(loss)/d(loss) = 1 and replays the backward rules in reverse order.
  void backward(const Tensor& loss) const;

 private:
  std::vector<TensorImpl*> order_;
};

// Populates grads of every requires_grad tensor reachable from `loss`.
// Leaf gradients accumulate across calls; call zero_grad() between steps.
void backward(const Tensor& loss);

}  // namespace histaid::tensor
