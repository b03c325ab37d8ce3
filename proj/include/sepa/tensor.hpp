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

#ifndef SEPA_TENSOR_HPP
#define SEPA_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sepa/rng.hpp"

namespace sepa {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

// One operation record. Parents are the operation's inputs; `backprop`
// reads this node's grad and accumulates into the parents' grads. Children
// point at parents only, so the graph is acyclic by construction and freed
// by plain shared_ptr release once the last handle drops.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily, kept zeroed between uses
  bool requires_grad = false;
  bool backward_ran = false;  // set on the node backward() was called on
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
  const char* op = "leaf";

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Value-semantic handle to a graph node. Graphs are tapes rebuilt per
// training step: every op allocates a fresh node, and backward() walks the
// reverse topological order of the sub-DAG reachable from the loss.
// Detached tensors (no backprop pending) are immutable values; forward
// passes that only read shared leaves are safe to run concurrently.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;
  // 2-D accessors; rank-1 tensors count as a single column.
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaf updates (optimizer)
  const std::vector<double>& grad() const;
  bool requires_grad() const;

  double value() const;               // scalar-only
  double at(std::size_t i) const;     // flat index
  void zero_grad();                   // this node only

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  friend Tensor make_op(Shape shape, std::vector<double> data,
                        std::vector<Tensor> parents, const char* op,
                        std::function<void(detail::Node&)> backprop);
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise ops (equal shapes, or one operand a broadcast scalar) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor log_op(const Tensor& x);     // domain x > 0
Tensor softplus(const Tensor& x);   // log(1 + e^x), evaluated stably

// constant-parameter ops
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);

// ---- structural ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const Tensor& a, const Tensor& b);          // rank-1
Tensor slice(const Tensor& x, std::size_t begin, std::size_t len);  // rank-1
Tensor row(const Tensor& matrix, std::size_t r);           // row copy + scatter grad
Tensor sum(const Tensor& x);                               // -> scalar

// ---- probabilistic heads ----
Tensor softmax(const Tensor& logits);                      // rank-1, stable
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target_index);

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
// requires_grad node reachable from `loss`, visiting each node exactly once
// in reverse topological order. Calling twice on the same node without
// reset_backward() is a contract error.
void backward(const Tensor& loss);
void reset_backward(const Tensor& loss);

// Central-difference check of the autodiff gradient of f at `point`.
// Returns the max elementwise relative error with denominator
// max(|analytic|, |numeric|, 1e-8); any non-finite value comes back as +inf.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double epsilon);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace sepa

#endif  // SEPA_TENSOR_HPP
