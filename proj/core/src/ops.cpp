#include "trinet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace trinet {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

Tensor make_output(Shape shape, std::vector<double> values,
                   std::vector<NodePtr> parents,
                   std::function<void(const TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool any_grad = false;
  for (const auto& p : parents) any_grad = any_grad || p->requires_grad;
  node->requires_grad = any_grad;
  if (any_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same_shape = false;
};

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out_shape = a;
    plan.same_shape = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out_shape.assign(rank, 1);
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] == pb[d]) {
      plan.out_shape[d] = pa[d];
    } else if (pa[d] == 1 || pb[d] == 1) {
      plan.out_shape[d] = std::max(pa[d], pb[d]);
    } else {
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_to_string(a) +
                                  " and " + shape_to_string(b) + " do not broadcast");
    }
  }
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    plan.stride_a[d] = (pa[d] == 1 && plan.out_shape[d] != 1) ? 0 : sa;
    plan.stride_b[d] = (pb[d] == 1 && plan.out_shape[d] != 1) ? 0 : sb;
    sa *= pa[d];
    sb *= pb[d];
  }
  return plan;
}

template <class F>
void broadcast_iterate(const BroadcastPlan& plan, F&& f) {
  const std::size_t total = shape_size(plan.out_shape);
  const std::size_t rank = plan.out_shape.size();
  if (rank == 0) {
    if (total) f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t io = 0; io < total; ++io) {
    f(io, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (idx[d] < plan.out_shape[d]) break;
      idx[d] = 0;
      ia -= plan.stride_a[d] * plan.out_shape[d];
      ib -= plan.stride_b[d] * plan.out_shape[d];
    }
  }
}

enum class BinaryKind { add, sub, mul };

Tensor binary_op(const char* name, BinaryKind kind, const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  if (!an || !bn) throw std::invalid_argument(std::string(name) + ": undefined operand");
  BroadcastPlan plan = plan_broadcast(name, an->shape, bn->shape);
  std::vector<double> out(shape_size(plan.out_shape));

  const double* av = an->values.data();
  const double* bv = bn->values.data();
  if (plan.same_shape) {
    const std::size_t n = out.size();
    switch (kind) {
      case BinaryKind::add:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
        break;
      case BinaryKind::sub:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
        break;
      case BinaryKind::mul:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
        break;
    }
  } else {
    switch (kind) {
      case BinaryKind::add:
        broadcast_iterate(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
          out[io] = av[ia] + bv[ib];
        });
        break;
      case BinaryKind::sub:
        broadcast_iterate(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
          out[io] = av[ia] - bv[ib];
        });
        break;
      case BinaryKind::mul:
        broadcast_iterate(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
          out[io] = av[ia] * bv[ib];
        });
        break;
    }
  }

  auto backward_fn = [an, bn, plan, kind](const TensorNode& o) {
    const double* g = o.grad.data();
    if (plan.same_shape) {
      const std::size_t n = o.values.size();
      if (an->requires_grad) {
        double* ga = an->grad.data();
        if (kind == BinaryKind::mul) {
          const double* bv = bn->values.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (bn->requires_grad) {
        double* gb = bn->grad.data();
        switch (kind) {
          case BinaryKind::add:
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
            break;
          case BinaryKind::sub:
            for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
            break;
          case BinaryKind::mul: {
            const double* av = an->values.data();
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
            break;
          }
        }
      }
      return;
    }
    double* ga = an->requires_grad ? an->grad.data() : nullptr;
    double* gb = bn->requires_grad ? bn->grad.data() : nullptr;
    const double* av = an->values.data();
    const double* bv = bn->values.data();
    broadcast_iterate(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
      const double gv = g[io];
      switch (kind) {
        case BinaryKind::add:
          if (ga) ga[ia] += gv;
          if (gb) gb[ib] += gv;
          break;
        case BinaryKind::sub:
          if (ga) ga[ia] += gv;
          if (gb) gb[ib] -= gv;
          break;
        case BinaryKind::mul:
          if (ga) ga[ia] += gv * bv[ib];
          if (gb) gb[ib] += gv * av[ia];
          break;
      }
    });
  };

  return make_output(plan.out_shape, std::move(out), {an, bn}, std::move(backward_fn));
}

// C[m x n] += A[m x k] * B[k x n]
inline void mm_accum(const double* A, const double* B, double* C, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = A + i * k;
    double* c_row = C + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a_row[kk];
      const double* b_row = B + kk * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
  }
}

// dA[m x k] += dC[m x n] * B^T  (B is [k x n])
inline void mm_grad_a(const double* dC, const double* B, double* dA, std::size_t m,
                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dc_row = dC + i * n;
    double* da_row = dA + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* b_row = B + kk * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += dc_row[j] * b_row[j];
      da_row[kk] += s;
    }
  }
}

// dB[k x n] += A^T * dC  (A is [m x k], dC is [m x n])
inline void mm_grad_b(const double* A, const double* dC, double* dB, std::size_t m,
                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = A + i * k;
    const double* dc_row = dC + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a_row[kk];
      double* db_row = dB + kk * n;
      for (std::size_t j = 0; j < n; ++j) db_row[j] += av * dc_row[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Tensor layer_norm_impl(const Tensor& x, const Tensor* gain, const Tensor* bias,
                       double eps) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("layer_norm: undefined input");
  if (xn->shape.empty()) throw std::invalid_argument("layer_norm: scalar input has no axis");
  const std::size_t h = xn->shape.back();
  const std::size_t rows = xn->values.size() / h;

  NodePtr gn, bn2;
  if (gain) {
    gn = gain->node();
    bn2 = bias->node();
    if (gn->shape != Shape{h} || bn2->shape != Shape{h}) {
      throw std::invalid_argument("layer_norm: gain/bias must be 1-D of size " +
                                  std::to_string(h));
    }
  }

  std::vector<double> out(xn->values.size());
  // Normalized values and inverse stddevs are needed by the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(xn->values.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);

  const double* xv = xn->values.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * h;
    double mean = 0.0;
    for (std::size_t i = 0; i < h; ++i) mean += row[i];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
      const double d = row[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* xh = xhat->data() + r * h;
    double* orow = out.data() + r * h;
    if (gn) {
      const double* gv = gn->values.data();
      const double* bv = bn2->values.data();
      for (std::size_t i = 0; i < h; ++i) {
        xh[i] = (row[i] - mean) * is;
        orow[i] = gv[i] * xh[i] + bv[i];
      }
    } else {
      for (std::size_t i = 0; i < h; ++i) {
        xh[i] = (row[i] - mean) * is;
        orow[i] = xh[i];
      }
    }
  }

  std::vector<NodePtr> parents{xn};
  if (gn) {
    parents.push_back(gn);
    parents.push_back(bn2);
  }

  auto backward_fn = [xn, gn, bn2, xhat, inv_std, h, rows](const TensorNode& o) {
    const double* g = o.grad.data();
    const double* xh = xhat->data();
    const double inv_h = 1.0 / static_cast<double>(h);
    std::vector<double> dxhat(h);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* grow = g + r * h;
      const double* xrow = xh + r * h;
      if (gn) {
        const double* gv = gn->values.data();
        for (std::size_t i = 0; i < h; ++i) dxhat[i] = grow[i] * gv[i];
        if (gn->requires_grad) {
          double* gg = gn->grad.data();
          for (std::size_t i = 0; i < h; ++i) gg[i] += grow[i] * xrow[i];
        }
        if (bn2->requires_grad) {
          double* gb = bn2->grad.data();
          for (std::size_t i = 0; i < h; ++i) gb[i] += grow[i];
        }
      } else {
        for (std::size_t i = 0; i < h; ++i) dxhat[i] = grow[i];
      }
      if (xn->requires_grad) {
        double sum_dx = 0.0, sum_dx_xh = 0.0;
        for (std::size_t i = 0; i < h; ++i) {
          sum_dx += dxhat[i];
          sum_dx_xh += dxhat[i] * xrow[i];
        }
        const double is = (*inv_std)[r];
        double* gx = xn->grad.data() + r * h;
        for (std::size_t i = 0; i < h; ++i) {
          gx[i] += is * (dxhat[i] - inv_h * sum_dx - xrow[i] * inv_h * sum_dx_xh);
        }
      }
    }
  };

  return make_output(xn->shape, std::move(out), std::move(parents), std::move(backward_fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinaryKind::mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("scale: undefined input");
  if (!std::isfinite(factor)) throw std::runtime_error("scale: non-finite factor");
  std::vector<double> out(xn->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xn->values[i] * factor;
  auto backward_fn = [xn, factor](const TensorNode& o) {
    double* gx = xn->grad.data();
    const double* g = o.grad.data();
    for (std::size_t i = 0; i < o.values.size(); ++i) gx[i] += g[i] * factor;
  };
  return make_output(xn->shape, std::move(out), {xn}, std::move(backward_fn));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  if (!an || !bn) throw std::invalid_argument("matmul: undefined operand");
  const Shape& sa = an->shape;
  const Shape& sb = bn->shape;
  if (sa.size() < 2) {
    throw std::invalid_argument("matmul: left operand must have rank >= 2, got " +
                                shape_to_string(sa));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  std::size_t n = 0;
  bool b_is_matrix = false;
  if (sb.size() == 2) {
    b_is_matrix = true;
    if (sb[0] != k) {
      throw std::invalid_argument("matmul: inner dimensions differ: " +
                                  shape_to_string(sa) + " vs " + shape_to_string(sb));
    }
    n = sb[1];
  } else if (sb.size() == sa.size()) {
    for (std::size_t d = 0; d + 2 < sa.size(); ++d) {
      if (sa[d] != sb[d]) {
        throw std::invalid_argument("matmul: batch dimensions differ: " +
                                    shape_to_string(sa) + " vs " + shape_to_string(sb));
      }
    }
    if (sb[sb.size() - 2] != k) {
      throw std::invalid_argument("matmul: inner dimensions differ: " +
                                  shape_to_string(sa) + " vs " + shape_to_string(sb));
    }
    n = sb[sb.size() - 1];
  } else {
    throw std::invalid_argument("matmul: right operand must be a matrix or match the "
                                "left operand's rank");
  }

  std::size_t batch = 1;
  for (std::size_t d = 0; d + 2 < sa.size(); ++d) batch *= sa[d];

  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);

  const double* av = an->values.data();
  const double* bv = bn->values.data();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* bs = b_is_matrix ? bv : bv + s * k * n;
    mm_accum(av + s * m * k, bs, out.data() + s * m * n, m, k, n);
  }

  auto backward_fn = [an, bn, batch, m, k, n, b_is_matrix](const TensorNode& o) {
    const double* g = o.grad.data();
    const double* av = an->values.data();
    const double* bv = bn->values.data();
    for (std::size_t s = 0; s < batch; ++s) {
      const double* gs = g + s * m * n;
      const double* bs = b_is_matrix ? bv : bv + s * k * n;
      if (an->requires_grad) {
        mm_grad_a(gs, bs, an->grad.data() + s * m * k, m, k, n);
      }
      if (bn->requires_grad) {
        double* dbs = b_is_matrix ? bn->grad.data() : bn->grad.data() + s * k * n;
        mm_grad_b(av + s * m * k, gs, dbs, m, k, n);
      }
    }
  };

  return make_output(std::move(out_shape), std::move(out), {an, bn}, std::move(backward_fn));
}

Tensor transpose_last(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("transpose_last: undefined input");
  const Shape& s = xn->shape;
  if (s.size() < 2) {
    throw std::invalid_argument("transpose_last: rank >= 2 required, got " +
                                shape_to_string(s));
  }
  const std::size_t r = s[s.size() - 2];
  const std::size_t c = s[s.size() - 1];
  std::size_t batch = 1;
  for (std::size_t d = 0; d + 2 < s.size(); ++d) batch *= s[d];

  Shape out_shape = s;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  std::vector<double> out(xn->values.size());
  const double* xv = xn->values.data();
  for (std::size_t sl = 0; sl < batch; ++sl) {
    const double* in = xv + sl * r * c;
    double* o = out.data() + sl * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) o[j * r + i] = in[i * c + j];
  }

  auto backward_fn = [xn, batch, r, c](const TensorNode& o) {
    const double* g = o.grad.data();
    double* gx = xn->grad.data();
    for (std::size_t sl = 0; sl < batch; ++sl) {
      const double* gs = g + sl * r * c;
      double* gxs = gx + sl * r * c;
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t i = 0; i < r; ++i) gxs[i * c + j] += gs[j * r + i];
    }
  };

  return make_output(std::move(out_shape), std::move(out), {xn}, std::move(backward_fn));
}

Tensor gelu(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("gelu: undefined input");
  const std::size_t n = xn->values.size();
  std::vector<double> out(n);
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const double* xv = xn->values.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  }
  auto backward_fn = [xn](const TensorNode& o) {
    const double* g = o.grad.data();
    const double* xv = xn->values.data();
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < o.values.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
      gx[i] += g[i] * (cdf + xv[i] * pdf);
    }
  };
  return make_output(xn->shape, std::move(out), {xn}, std::move(backward_fn));
}

Tensor square(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("square: undefined input");
  const std::size_t n = xn->values.size();
  std::vector<double> out(n);
  const double* xv = xn->values.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] * xv[i];
  auto backward_fn = [xn](const TensorNode& o) {
    const double* g = o.grad.data();
    const double* xv = xn->values.data();
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < o.values.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  };
  return make_output(xn->shape, std::move(out), {xn}, std::move(backward_fn));
}

Tensor sqrt_scalar(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("sqrt_scalar: undefined input");
  if (xn->values.size() != 1) {
    throw std::invalid_argument("sqrt_scalar: input must be scalar, got shape " +
                                shape_to_string(xn->shape));
  }
  const double v = xn->values[0];
  if (v < 0.0) throw std::invalid_argument("sqrt_scalar: negative input");
  const double root = std::sqrt(v);
  auto backward_fn = [xn, root](const TensorNode& o) {
    if (root == 0.0) throw std::runtime_error("sqrt_scalar: derivative undefined at zero");
    xn->grad[0] += o.grad[0] * 0.5 / root;
  };
  return make_output(xn->shape, {root}, {xn}, std::move(backward_fn));
}

Tensor log_clamped(const Tensor& x, double eps) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("log_clamped: undefined input");
  if (eps <= 0.0) throw std::invalid_argument("log_clamped: eps must be positive");
  const std::size_t n = xn->values.size();
  std::vector<double> out(n);
  const double* xv = xn->values.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(std::max(xv[i], eps));
  auto backward_fn = [xn, eps](const TensorNode& o) {
    const double* g = o.grad.data();
    const double* xv = xn->values.data();
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < o.values.size(); ++i) {
      if (xv[i] > eps) gx[i] += g[i] / xv[i];
    }
  };
  return make_output(xn->shape, std::move(out), {xn}, std::move(backward_fn));
}

Tensor softmax(const Tensor& x, int axis) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("softmax: undefined input");
  const std::size_t ax = normalize_axis(axis, xn->shape.size());
  const AxisSplit sp = split_at_axis(xn->shape, ax);

  std::vector<double> out(xn->values.size());
  const double* xv = xn->values.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      double denom = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(xv[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] *= inv;
    }
  }

  auto out_node_values = std::make_shared<std::vector<double>>(out);
  auto backward_fn = [xn, sp, out_node_values](const TensorNode& o) {
    const double* g = o.grad.data();
    const double* y = out_node_values->data();
    double* gx = xn->grad.data();
    for (std::size_t ou = 0; ou < sp.outer; ++ou) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = ou * sp.len * sp.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t idx = base + l * sp.inner;
          dot += g[idx] * y[idx];
        }
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t idx = base + l * sp.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  };

  return make_output(xn->shape, std::move(out), {xn}, std::move(backward_fn));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return layer_norm_impl(x, &gain, &bias, eps);
}

Tensor layer_norm(const Tensor& x, double eps) {
  return layer_norm_impl(x, nullptr, nullptr, eps);
}

Tensor sum_all(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("sum_all: undefined input");
  double s = 0.0;
  for (double v : xn->values) s += v;
  if (!std::isfinite(s)) throw std::runtime_error("sum_all: non-finite result");
  auto backward_fn = [xn](const TensorNode& o) {
    const double g = o.grad[0];
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < xn->values.size(); ++i) gx[i] += g;
  };
  return make_output(Shape{}, {s}, {xn}, std::move(backward_fn));
}

Tensor mean_all(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("mean_all: undefined input");
  if (xn->values.empty()) throw std::invalid_argument("mean_all: empty tensor");
  const double inv = 1.0 / static_cast<double>(xn->values.size());
  double s = 0.0;
  for (double v : xn->values) s += v;
  s *= inv;
  if (!std::isfinite(s)) throw std::runtime_error("mean_all: non-finite result");
  auto backward_fn = [xn, inv](const TensorNode& o) {
    const double g = o.grad[0] * inv;
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < xn->values.size(); ++i) gx[i] += g;
  };
  return make_output(Shape{}, {s}, {xn}, std::move(backward_fn));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("reshape: undefined input");
  if (shape_size(new_shape) != xn->values.size()) {
    throw std::invalid_argument("reshape: cannot reshape " + shape_to_string(xn->shape) +
                                " to " + shape_to_string(new_shape));
  }
  std::vector<double> out = xn->values;
  auto backward_fn = [xn](const TensorNode& o) {
    const double* g = o.grad.data();
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < o.values.size(); ++i) gx[i] += g[i];
  };
  return make_output(std::move(new_shape), std::move(out), {xn}, std::move(backward_fn));
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t len) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("slice: undefined input");
  const std::size_t ax = normalize_axis(axis, xn->shape.size());
  const AxisSplit sp = split_at_axis(xn->shape, ax);
  if (len == 0 || start + len > sp.len) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for axis of size " +
                                std::to_string(sp.len));
  }
  Shape out_shape = xn->shape;
  out_shape[ax] = len;
  std::vector<double> out(sp.outer * len * sp.inner);
  const double* xv = xn->values.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const double* src = xv + (o * sp.len + start) * sp.inner;
    double* dst = out.data() + o * len * sp.inner;
    std::copy(src, src + len * sp.inner, dst);
  }
  auto backward_fn = [xn, sp, start, len](const TensorNode& o) {
    const double* g = o.grad.data();
    double* gx = xn->grad.data();
    for (std::size_t ou = 0; ou < sp.outer; ++ou) {
      double* dst = gx + (ou * sp.len + start) * sp.inner;
      const double* src = g + ou * len * sp.inner;
      for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
    }
  };
  return make_output(std::move(out_shape), std::move(out), {xn}, std::move(backward_fn));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  std::size_t total_len = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != out_shape.size()) {
      throw std::invalid_argument("concat: rank mismatch");
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != out_shape[d]) {
        throw std::invalid_argument("concat: shapes differ outside the concat axis: " +
                                    shape_to_string(out_shape) + " vs " + shape_to_string(s));
      }
    }
    total_len += s[ax];
  }
  out_shape[ax] = total_len;

  const AxisSplit sp = split_at_axis(out_shape, ax);
  std::vector<double> out(shape_size(out_shape));
  std::vector<NodePtr> parents;
  std::vector<std::size_t> lens;
  parents.reserve(parts.size());
  for (const Tensor& p : parts) {
    parents.push_back(p.node());
    lens.push_back(p.shape()[ax]);
  }
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parents.size(); ++pi) {
    const double* src = parents[pi]->values.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = out.data() + (o * sp.len + offset) * sp.inner;
      std::copy(src + o * lens[pi] * sp.inner, src + (o + 1) * lens[pi] * sp.inner, dst);
    }
    offset += lens[pi];
  }

  auto backward_fn = [parents, lens, sp](const TensorNode& o) {
    const double* g = o.grad.data();
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parents.size(); ++pi) {
      if (parents[pi]->requires_grad) {
        double* gx = parents[pi]->grad.data();
        for (std::size_t ou = 0; ou < sp.outer; ++ou) {
          const double* src = g + (ou * sp.len + offset) * sp.inner;
          double* dst = gx + ou * lens[pi] * sp.inner;
          for (std::size_t i = 0; i < lens[pi] * sp.inner; ++i) dst[i] += src[i];
        }
      }
      offset += lens[pi];
    }
  };

  return make_output(std::move(out_shape), std::move(out), std::move(parents),
                     std::move(backward_fn));
}

Tensor stop_gradient(const Tensor& x) {
  auto xn = x.node();
  if (!xn) throw std::invalid_argument("stop_gradient: undefined input");
  auto node = std::make_shared<TensorNode>();
  node->shape = xn->shape;
  node->values = xn->values;
  node->requires_grad = false;
  return Tensor::from_node(std::move(node));
}

}  // namespace trinet
