// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sepa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "sepa/error.hpp"
#include "sepa/kernels.hpp"

namespace sepa {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  if (s.empty()) os << "scalar";
  return os.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) {
    if (d == 0) throw ContractError("tensor shape has a zero dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> parents, const char* op,
               std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backprop = std::move(backprop);
  }
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ContractError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(data), requires_grad);
}

static detail::Node* checked(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw ContractError("use of an undefined tensor");
  return n.get();
}

const Shape& Tensor::shape() const { return checked(node_)->shape; }
std::size_t Tensor::size() const { return checked(node_)->data.size(); }
std::size_t Tensor::rank() const { return checked(node_)->shape.size(); }

std::size_t Tensor::rows() const {
  const auto& s = checked(node_)->shape;
  return s.size() == 2 ? s[0] : size();
}

std::size_t Tensor::cols() const {
  const auto& s = checked(node_)->shape;
  return s.size() == 2 ? s[1] : 1;
}

const std::vector<double>& Tensor::data() const { return checked(node_)->data; }

std::vector<double>& Tensor::mutable_data() { return checked(node_)->data; }

const std::vector<double>& Tensor::grad() const {
  auto* n = checked(node_);
  n->ensure_grad();
  return n->grad;
}

bool Tensor::requires_grad() const { return checked(node_)->requires_grad; }

double Tensor::value() const {
  auto* n = checked(node_);
  if (n->data.size() != 1) {
    throw ContractError("value() on non-scalar tensor of shape " +
                        shape_str(n->shape));
  }
  return n->data[0];
}

double Tensor::at(std::size_t i) const {
  auto* n = checked(node_);
  if (i >= n->data.size()) throw ContractError("tensor index out of range");
  return n->data[i];
}

void Tensor::zero_grad() {
  auto* n = checked(node_);
  n->grad.assign(n->data.size(), 0.0);
  n->backward_ran = false;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

enum class Bcast { none, left_scalar, right_scalar };

Bcast binary_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::none;
  if (a.size() == 1) return Bcast::left_scalar;
  if (b.size() == 1) return Bcast::right_scalar;
  throw ContractError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                      " (only scalar broadcast is supported)");
}

double bval(const std::vector<double>& v, std::size_t i, bool is_scalar) {
  return is_scalar ? v[0] : v[i];
}

// Accumulate g into a parent that may have been broadcast from a scalar.
void acc_grad(detail::Node& parent, const std::vector<double>& g,
              bool was_scalar) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  if (was_scalar) {
    double s = 0.0;
    for (double v : g) s += v;
    parent.grad[0] += s;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_broadcast(a, b, "add");
  const bool as = bc == Bcast::left_scalar, bs = bc == Bcast::right_scalar;
  const Shape& out_shape = as ? b.shape() : a.shape();
  const std::size_t n = as ? b.size() : a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = bval(a.data(), i, as) + bval(b.data(), i, bs);
  }
  return make_op(out_shape, std::move(out), {a, b}, "add",
                 [as, bs](detail::Node& nd) {
                   acc_grad(*nd.parents[0], nd.grad, as);
                   acc_grad(*nd.parents[1], nd.grad, bs);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_broadcast(a, b, "sub");
  const bool as = bc == Bcast::left_scalar, bs = bc == Bcast::right_scalar;
  const Shape& out_shape = as ? b.shape() : a.shape();
  const std::size_t n = as ? b.size() : a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = bval(a.data(), i, as) - bval(b.data(), i, bs);
  }
  return make_op(out_shape, std::move(out), {a, b}, "sub",
                 [as, bs](detail::Node& nd) {
                   acc_grad(*nd.parents[0], nd.grad, as);
                   std::vector<double> neg(nd.grad.size());
                   for (std::size_t i = 0; i < neg.size(); ++i) {
                     neg[i] = -nd.grad[i];
                   }
                   acc_grad(*nd.parents[1], neg, bs);
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_broadcast(a, b, "mul");
  const bool as = bc == Bcast::left_scalar, bs = bc == Bcast::right_scalar;
  const Shape& out_shape = as ? b.shape() : a.shape();
  const std::size_t n = as ? b.size() : a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = bval(a.data(), i, as) * bval(b.data(), i, bs);
  }
  return make_op(out_shape, std::move(out), {a, b}, "mul",
                 [as, bs](detail::Node& nd) {
                   const auto& av = nd.parents[0]->data;
                   const auto& bv = nd.parents[1]->data;
                   const std::size_t m = nd.grad.size();
                   std::vector<double> ga(m), gb(m);
                   for (std::size_t i = 0; i < m; ++i) {
                     ga[i] = nd.grad[i] * bval(bv, i, bs);
                     gb[i] = nd.grad[i] * bval(av, i, as);
                   }
                   acc_grad(*nd.parents[0], ga, as);
                   acc_grad(*nd.parents[1], gb, bs);
                 });
}

namespace {

template <class Fwd, class GradFactor>
Tensor unary_map(const Tensor& x, const char* op, Fwd fwd, GradFactor gf) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  kernels::map_auto(x.data().data(), out.data(), n, fwd);
  return make_op(x.shape(), std::move(out), {x}, op, [gf](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      p.grad[i] += nd.grad[i] * gf(p.data[i], nd.data[i]);
    }
  });
}

}  // namespace

Tensor tanh_op(const Tensor& x) {
  return unary_map(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_map(
      x, "sigmoid",
      [](double v) {
        // split by sign so e^{...} never overflows
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_op(const Tensor& x) {
  return unary_map(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log_op(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw NumericError("log: input " + std::to_string(v) +
                         " outside the positive domain");
    }
  }
  return unary_map(
      x, "log", [](double v) { return std::log(v); },
      [](double xv, double) { return 1.0 / xv; });
}

Tensor softplus(const Tensor& x) {
  return unary_map(
      x, "softplus",
      [](double v) {
        return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      },
      [](double xv, double) {
        if (xv >= 0) return 1.0 / (1.0 + std::exp(-xv));
        const double e = std::exp(xv);
        return e / (1.0 + e);
      });
}

Tensor scale(const Tensor& x, double c) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c * x.data()[i];
  return make_op(x.shape(), std::move(out), {x}, "scale",
                 [c](detail::Node& nd) {
                   auto& p = *nd.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                     p.grad[i] += c * nd.grad[i];
                   }
                 });
}

Tensor add_const(const Tensor& x, double c) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[i] + c;
  return make_op(x.shape(), std::move(out), {x}, "add_const",
                 [](detail::Node& nd) {
                   auto& p = *nd.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                     p.grad[i] += nd.grad[i];
                   }
                 });
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

namespace {

// matmul treats rank-1 operands as 1 x k (left) / k x 1 (right) and squeezes
// the promoted axis back out of the result.
struct MatDims {
  std::size_t m, k, n;
  bool squeeze_left, squeeze_right;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() > 2) {
    throw ContractError("matmul: rank > 2 unsupported, got " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  MatDims d{};
  d.squeeze_left = a.rank() == 1;
  d.squeeze_right = b.rank() == 1;
  d.m = d.squeeze_left ? 1 : a.shape()[0];
  const std::size_t ak = d.squeeze_left ? a.shape()[0] : a.shape()[1];
  const std::size_t bk = b.shape()[0];  // leading axis is k in both ranks
  d.n = d.squeeze_right ? 1 : b.shape()[1];
  if (ak != bk) {
    throw ContractError("matmul: inner dimensions disagree: " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  d.k = ak;
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b);
  std::vector<double> out(d.m * d.n);
  kernels::matmul_auto(a.data().data(), b.data().data(), out.data(), d.m, d.k,
                       d.n);
  Shape out_shape;
  if (d.squeeze_left && d.squeeze_right) {
    out_shape = {1};
  } else if (d.squeeze_left) {
    out_shape = {d.n};
  } else if (d.squeeze_right) {
    out_shape = {d.m};
  } else {
    out_shape = {d.m, d.n};
  }
  return make_op(std::move(out_shape), std::move(out), {a, b}, "matmul",
                 [d](detail::Node& nd) {
                   auto& pa = *nd.parents[0];
                   auto& pb = *nd.parents[1];
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     kernels::matmul_nt_acc_auto(nd.grad.data(),
                                                 pb.data.data(),
                                                 pa.grad.data(), d.m, d.k, d.n);
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     kernels::matmul_tn_acc_auto(pa.data.data(),
                                                 nd.grad.data(),
                                                 pb.grad.data(), d.m, d.k, d.n);
                   }
                 });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) {
    throw ContractError("concat: rank-1 operands required, got " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t na = a.size();
  return make_op(Shape{a.size() + b.size()}, std::move(out), {a, b}, "concat",
                 [na](detail::Node& nd) {
                   auto& pa = *nd.parents[0];
                   auto& pb = *nd.parents[1];
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     for (std::size_t i = 0; i < na; ++i) {
                       pa.grad[i] += nd.grad[i];
                     }
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (std::size_t i = na; i < nd.grad.size(); ++i) {
                       pb.grad[i - na] += nd.grad[i];
                     }
                   }
                 });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t len) {
  if (x.rank() != 1) {
    throw ContractError("slice: rank-1 operand required, got " +
                        shape_str(x.shape()));
  }
  if (begin + len > x.size()) {
    throw ContractError("slice: range [" + std::to_string(begin) + ", " +
                        std::to_string(begin + len) + ") exceeds length " +
                        std::to_string(x.size()));
  }
  std::vector<double> out(x.data().begin() + begin,
                          x.data().begin() + begin + len);
  return make_op(Shape{len}, std::move(out), {x}, "slice",
                 [begin](detail::Node& nd) {
                   auto& p = *nd.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                     p.grad[begin + i] += nd.grad[i];
                   }
                 });
}

Tensor row(const Tensor& matrix, std::size_t r) {
  if (matrix.rank() != 2) {
    throw ContractError("row: rank-2 operand required, got " +
                        shape_str(matrix.shape()));
  }
  const std::size_t nrows = matrix.shape()[0];
  const std::size_t ncols = matrix.shape()[1];
  if (r >= nrows) {
    throw ContractError("row: index " + std::to_string(r) +
                        " out of range for " + shape_str(matrix.shape()));
  }
  std::vector<double> out(matrix.data().begin() + r * ncols,
                          matrix.data().begin() + (r + 1) * ncols);
  return make_op(Shape{ncols}, std::move(out), {matrix}, "row",
                 [r, ncols](detail::Node& nd) {
                   auto& p = *nd.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < ncols; ++i) {
                     p.grad[r * ncols + i] += nd.grad[i];
                   }
                 });
}

Tensor sum(const Tensor& x) {
  const double s = kernels::reduce_sum_serial(x.data().data(), x.size());
  return make_op(Shape{1}, std::vector<double>{s}, {x}, "sum",
                 [](detail::Node& nd) {
                   auto& p = *nd.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   const double g = nd.grad[0];
                   for (std::size_t i = 0; i < p.grad.size(); ++i) {
                     p.grad[i] += g;
                   }
                 });
}

// ---------------------------------------------------------------------------
// probabilistic heads
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) {
    throw ContractError("softmax: rank-1 logits required, got " +
                        shape_str(logits.shape()));
  }
  const auto& x = logits.data();
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return make_op(logits.shape(), std::move(out), {logits}, "softmax",
                 [](detail::Node& nd) {
                   auto& p = *nd.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   double dot = 0.0;
                   for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                     dot += nd.grad[i] * nd.data[i];
                   }
                   for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                     p.grad[i] += nd.data[i] * (nd.grad[i] - dot);
                   }
                 });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target_index) {
  if (logits.rank() != 1) {
    throw ContractError("softmax_cross_entropy: rank-1 logits required, got " +
                        shape_str(logits.shape()));
  }
  if (target_index >= logits.size()) {
    throw ContractError("softmax_cross_entropy: target index " +
                        std::to_string(target_index) +
                        " out of range for length " +
                        std::to_string(logits.size()));
  }
  const auto& x = logits.data();
  const double m = *std::max_element(x.begin(), x.end());
  double denom = 0.0;
  std::vector<double> probs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probs[i] = std::exp(x[i] - m);
    denom += probs[i];
  }
  for (double& v : probs) v /= denom;
  const double loss = m + std::log(denom) - x[target_index];
  return make_op(
      Shape{1}, std::vector<double>{loss}, {logits}, "softmax_xent",
      [probs = std::move(probs), target_index](detail::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = nd.grad[0];
        for (std::size_t i = 0; i < probs.size(); ++i) {
          p.grad[i] += g * (probs[i] - (i == target_index ? 1.0 : 0.0));
        }
      });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace {

// Iterative post-order DFS over requires_grad nodes; the returned order is
// topological (parents before children).
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (root->requires_grad) stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Tensor& loss) {
  detail::Node* root = loss.node();
  if (!root) throw ContractError("backward: undefined tensor");
  if (root->size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(root->shape));
  }
  if (root->backward_ran) {
    throw ContractError(
        "backward: called twice on the same loss without reset");
  }
  root->backward_ran = true;
  if (!root->requires_grad) return;  // constant loss: all gradients are zero

  std::vector<detail::Node*> order = topo_order(root);
  root->ensure_grad();
  root->grad[0] += 1.0;
  // reverse topological order: every node's grad is complete before its
  // backprop rule pushes into parents
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* nd = *it;
    nd->ensure_grad();
    if (nd->backprop) nd->backprop(*nd);
  }
}

void reset_backward(const Tensor& loss) {
  detail::Node* root = loss.node();
  if (!root) throw ContractError("reset_backward: undefined tensor");
  root->backward_ran = false;
  for (detail::Node* nd : topo_order(root)) {
    nd->grad.assign(nd->data.size(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double epsilon) {
  if (!(epsilon > 0)) {
    throw ContractError("finite_difference_check: epsilon must be positive");
  }
  const double kInf = std::numeric_limits<double>::infinity();

  Tensor x = Tensor::from(point.shape(), point.data(), /*requires_grad=*/true);
  Tensor loss = f(x);
  if (loss.size() != 1) {
    throw ContractError("finite_difference_check: f must return a scalar");
  }
  backward(loss);
  std::vector<double> analytic = x.grad();

  double max_rel = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    std::vector<double> d = point.data();
    d[i] += epsilon;
    const double up = f(Tensor::from(point.shape(), d)).value();
    d[i] = point.data()[i] - epsilon;
    const double dn = f(Tensor::from(point.shape(), d)).value();
    const double numeric = (up - dn) / (2.0 * epsilon);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) return kInf;
    const double denom =
        std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace sepa
