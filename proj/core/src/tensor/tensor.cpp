#include "histaid/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "histaid/error.hpp"

namespace histaid::tensor {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

void validate_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " holds " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  impl->requires_grad = requires_grad;
  return impl;
}

const TensorImpl& checked(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) throw ContractError("use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_impl({1}, {value}, requires_grad));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  auto n = values.size();
  return Tensor(new_impl({1, n}, std::move(values), requires_grad));
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }
std::size_t Tensor::numel() const { return checked(impl_).value.size(); }
std::size_t Tensor::cols() const { return shape().back(); }
std::size_t Tensor::rows() const { return numel() / cols(); }

std::span<const double> Tensor::values() const { return checked(impl_).value; }

std::span<double> Tensor::mutable_values() {
  checked(impl_);
  if (impl_->node) throw ContractError("only leaf tensors may be modified in place");
  return impl_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_string(shape()));
  return impl_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  checked(impl_);
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& impl = checked(impl_);
  if (impl.grad.empty()) return std::vector<double>(impl.value.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& impl = checked(impl_);
  return Tensor(new_impl(impl.shape, impl.value, false));
}

Tensor Tensor::clone() const {
  const auto& impl = checked(impl_);
  return Tensor(new_impl(impl.shape, impl.value, impl.requires_grad));
}

bool Tensor::is_leaf() const { return checked(impl_).node == nullptr; }

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
  bool needs_grad = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  auto impl = new_impl(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

void accumulate_grad(const Tensor& t, std::span<const double> delta) {
  auto& impl = *t.impl();
  if (!impl.requires_grad) return;
  auto g = impl.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

Tape Tape::record(const Tensor& loss) {
  Tape tape;
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  std::unordered_set<const TensorImpl*> seen;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  auto* root = loss.impl().get();
  if (!root->node) return tape;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (next < impl->node->inputs.size()) {
      auto* child = impl->node->inputs[next++].get();
      if (child->node && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      tape.order_.push_back(impl);
      stack.pop_back();
    }
  }
  return tape;
}

bool Tape::topological() const {
  std::unordered_map<const TensorImpl*, std::size_t> position;
  for (std::size_t i = 0; i < order_.size(); ++i) position[order_[i]] = i;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& in : order_[i]->node->inputs) {
      auto it = position.find(in.get());
      if (it != position.end() && it->second >= i) return false;
    }
  }
  return true;
}

void Tape::backward(const Tensor& loss) const {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  for (auto* impl : order_) impl->grad.clear();
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto* impl = *it;
    if (impl->grad.empty()) continue;
    impl->node->backward(impl->grad, impl->value);
  }
}

void backward(const Tensor& loss) { Tape::record(loss).backward(loss); }

}  // namespace histaid::tensor
