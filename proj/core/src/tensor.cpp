#include "trinet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace trinet {

namespace {
std::atomic<std::uint64_t> g_next_seq{1};
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

bool shapes_equal(const Shape& a, const Shape& b) {
  return a == b;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  long long a = axis;
  if (a < 0) a += static_cast<long long>(rank);
  if (a < 0 || a >= static_cast<long long>(rank)) {
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_to_string(shape) +
                                " does not match " + std::to_string(values.size()) +
                                " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("tensor: non-finite value in input data");
    }
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->values.size(), 0.0);
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  node_ = std::move(node);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.normal() * stddev;
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::TensorNode> node) {
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  if (node->requires_grad && node->grad.size() != node->values.size()) {
    node->grad.assign(node->values.size(), 0.0);
  }
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->values.size();
}

std::size_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  return s[normalize_axis(axis, s.size())];
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() requires a scalar, got shape " +
                                shape_to_string(shape()));
  }
  return node_->values[0];
}

bool Tensor::requires_grad() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->requires_grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  if (!node_->requires_grad) {
    throw std::logic_error("tensor: grad() on a tensor that does not require grad");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss tensor");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_to_string(loss.shape()));
  }
  auto root = loss.node();
  if (!root->requires_grad) {
    throw std::invalid_argument("backward: loss is not attached to the tape");
  }

  // Collect the reachable tape segment.
  std::vector<detail::TensorNode*> nodes;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<detail::TensorNode*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    detail::TensorNode* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }

  for (detail::TensorNode* n : nodes) {
    if (n->backward_fn && n->consumed) {
      throw std::runtime_error("backward: tape already consumed; re-run the forward pass");
    }
  }

  // Creation order is a topological order: replay newest-first.
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::TensorNode* a, const detail::TensorNode* b) {
              return a->seq > b->seq;
            });

  root->grad[0] += 1.0;
  for (detail::TensorNode* n : nodes) {
    if (n->backward_fn) {
      n->backward_fn(*n);
      n->consumed = true;
    }
  }
}

}  // namespace trinet
