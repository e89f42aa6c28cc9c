#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trinet/rng.hpp"

namespace trinet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
bool shapes_equal(const Shape& a, const Shape& b);
std::string shape_to_string(const Shape& shape);

namespace detail {

/// One record on the computation tape. Nodes are created in execution order;
/// the creation index doubles as a topological order because an operation's
/// inputs always exist before its output.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated iff requires_grad, same length as values
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(const TensorNode&)> backward_fn;  // empty for leaves
  std::uint64_t seq = 0;
  bool consumed = false;
};

}  // namespace detail

/// Dense n-dimensional array of f64 values participating in reverse-mode
/// differentiation. A Tensor is a cheap shared handle; the underlying values
/// are immutable after creation (parameter updates build new tensors).
class Tensor {
 public:
  Tensor() = default;

  /// Builds a leaf tensor. Throws if product(shape) != values.size() or any
  /// value is non-finite.
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Dimension size along `axis`; negative axes count from the end.
  std::size_t dim(int axis) const;

  const std::vector<double>& values() const;
  /// Scalar extraction; throws unless size() == 1.
  double item() const;

  bool requires_grad() const;
  /// Gradient buffer; throws when the tensor does not require grad.
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Identity of the underlying tape node (used to detect aliasing).
  const void* node_id() const { return node_.get(); }

  // Internal: tape access for the operator implementations.
  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Reverse pass. `loss` must be a scalar attached to a live tape: every
/// reachable requires_grad leaf receives grad += d(loss)/d(leaf), and the
/// visited tape segment is marked consumed (a second backward through it
/// throws). Re-running the forward pass rebuilds a fresh tape.
void backward(const Tensor& loss);

/// Normalizes a possibly-negative axis; throws on out-of-range.
std::size_t normalize_axis(int axis, std::size_t rank);

}  // namespace trinet
