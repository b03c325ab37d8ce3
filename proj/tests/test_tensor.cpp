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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "sepa/error.hpp"
#include "sepa/rng.hpp"
#include "sepa/tensor.hpp"

using namespace sepa;

TEST_CASE("factories produce the documented values and shapes") {
  auto z = Tensor::zeros({2, 3});
  CHECK(z.size() == 6);
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 3);
  for (double v : z.data()) CHECK(v == 0.0);

  auto f = Tensor::full({4}, 2.5);
  for (double v : f.data()) CHECK(v == 2.5);

  auto s = Tensor::scalar(-1.25);
  CHECK(s.value() == -1.25);
  CHECK(s.rank() == 1);

  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ContractError);

  Rng rng(3);
  auto u = Tensor::uniform({100}, rng, -0.1, 0.1);
  for (double v : u.data()) {
    CHECK(v >= -0.1);
    CHECK(v < 0.1);
  }
}

TEST_CASE("elementwise ops on fixed points") {
  auto x = Tensor::from({3}, {0.0, 1.0, -1.0});
  CHECK(tanh_op(x).at(0) == 0.0);
  CHECK(sigmoid(x).at(0) == 0.5);
  CHECK(exp_op(x).at(1) == doctest::Approx(2.718281828459045).epsilon(1e-12));
  CHECK(softplus(Tensor::scalar(0.0)).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // stable at both extremes: no overflow, no total underflow to junk
  CHECK(softplus(Tensor::scalar(700.0)).value() == doctest::Approx(700.0));
  CHECK(softplus(Tensor::scalar(-700.0)).value() >= 0.0);
  CHECK(sigmoid(Tensor::scalar(-745.0)).value() >= 0.0);

  auto a = Tensor::from({2}, {3.0, 4.0});
  auto b = Tensor::from({2}, {10.0, 20.0});
  CHECK((a + b).data() == std::vector<double>{13.0, 24.0});
  CHECK((b - a).data() == std::vector<double>{7.0, 16.0});
  CHECK((a * b).data() == std::vector<double>{30.0, 80.0});
  CHECK(scale(a, -2.0).data() == std::vector<double>{-6.0, -8.0});
  CHECK(add_const(a, 1.5).data() == std::vector<double>{4.5, 5.5});
}

TEST_CASE("scalar broadcast works on either side; other mismatches throw") {
  auto v = Tensor::from({3}, {1.0, 2.0, 3.0});
  auto s = Tensor::scalar(10.0);
  CHECK((v + s).data() == std::vector<double>{11.0, 12.0, 13.0});
  CHECK((s + v).data() == std::vector<double>{11.0, 12.0, 13.0});
  CHECK((s - v).data() == std::vector<double>{9.0, 8.0, 7.0});
  CHECK((v * s).data() == std::vector<double>{10.0, 20.0, 30.0});
  auto w = Tensor::from({2}, {1.0, 1.0});
  CHECK_THROWS_AS(v + w, ContractError);
}

TEST_CASE("log rejects non-positive input by exit-code-3 error") {
  CHECK(log_op(Tensor::scalar(std::exp(1.0))).value() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(log_op(Tensor::scalar(0.0)), NumericError);
  CHECK_THROWS_AS(log_op(Tensor::from({2}, {1.0, -3.0})), NumericError);
}

TEST_CASE("matmul shapes: 2-D, promoted 1-D, and mismatch diagnostics") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.data() == std::vector<double>{19, 22, 43, 50});

  // matrix * vector -> vector
  auto v = Tensor::from({2}, {1.0, 10.0});
  auto mv = matmul(a, v);
  CHECK(mv.shape() == Shape{2});
  CHECK(mv.data() == std::vector<double>{21.0, 43.0});

  // vector * matrix -> vector
  auto vm = matmul(v, b);
  CHECK(vm.shape() == Shape{2});
  CHECK(vm.data() == std::vector<double>{75.0, 86.0});

  // vector * vector -> scalar dot product
  CHECK(matmul(v, v).value() == 101.0);

  auto bad = Tensor::zeros({4, 1});
  CHECK_THROWS_WITH_AS(matmul(Tensor::zeros({2, 3}), bad),
                       doctest::Contains("2x3"), ContractError);
}

TEST_CASE("concat, slice and row behave as documented") {
  auto a = Tensor::from({2}, {1.0, 2.0});
  auto b = Tensor::from({3}, {3.0, 4.0, 5.0});
  auto c = concat(a, b);
  CHECK(c.shape() == Shape{5});
  CHECK(c.data() == std::vector<double>{1, 2, 3, 4, 5});

  auto s = slice(c, 1, 3);
  CHECK(s.data() == std::vector<double>{2, 3, 4});
  CHECK_THROWS_AS(slice(c, 3, 3), ContractError);

  auto m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(row(m, 1).data() == std::vector<double>{4, 5, 6});
  CHECK_THROWS_AS(row(m, 2), ContractError);
  CHECK_THROWS_AS(row(c, 0), ContractError);
}

TEST_CASE("softmax and cross entropy on frozen points") {
  auto p = softmax(Tensor::from({4}, {0.0, 0.0, 0.0, 0.0}));
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  // softmax is shift-invariant and never overflows
  auto q = softmax(Tensor::from({2}, {1000.0, 1000.0 + std::log(3.0)}));
  CHECK(q.at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q.at(1) == doctest::Approx(0.75).epsilon(1e-12));

  // uniform logits: loss = ln(V)
  CHECK(softmax_cross_entropy(Tensor::from({4}, {0, 0, 0, 0}), 3).value() ==
        doctest::Approx(1.3862943611198906).epsilon(1e-15));
  // near-certain correct answer: loss = log(1 + e^-20), a tiny positive number
  CHECK(softmax_cross_entropy(Tensor::from({2}, {10.0, -10.0}), 0).value() ==
        doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-12));
  CHECK(softmax_cross_entropy(Tensor::from({2}, {10.0, -10.0}), 0).value() >
        0.0);
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::from({2}, {0.0, 0.0}), 2),
                  ContractError);
}

TEST_CASE("backward: hand-checked gradients") {
  // d/dx sum(x*x) = 2x
  auto x = Tensor::from({2}, {1.0, 2.0}, /*requires_grad=*/true);
  auto loss = sum(x * x);
  CHECK(loss.value() == 5.0);
  backward(loss);
  CHECK(x.grad() == std::vector<double>{2.0, 4.0});

  // reuse of the same tensor accumulates: d/dy sum(y + y) = 2
  auto y = Tensor::from({3}, {1.0, 1.0, 1.0}, true);
  backward(sum(y + y));
  CHECK(y.grad() == std::vector<double>{2.0, 2.0, 2.0});

  // diamond: z = y*y used twice, each path contributes once
  auto w = Tensor::scalar(3.0, true);
  auto sq = w * w;
  backward(sum(sq + sq));  // d/dw 2w^2 = 4w = 12
  CHECK(w.grad()[0] == 12.0);
}

TEST_CASE("backward: broadcast scalar collects the summed gradient") {
  auto v = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  auto s = Tensor::scalar(2.0, true);
  backward(sum(v * s));  // d/ds = sum(v) = 6, d/dv_i = s = 2
  CHECK(s.grad()[0] == 6.0);
  CHECK(v.grad() == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("backward twice without reset is a contract error; reset restores") {
  auto x = Tensor::scalar(2.0, true);
  auto loss = x * x;
  backward(loss);
  CHECK(x.grad()[0] == 4.0);
  CHECK_THROWS_AS(backward(loss), ContractError);
  reset_backward(loss);
  CHECK(x.grad()[0] == 0.0);
  backward(loss);
  CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("backward demands a scalar loss and skips constant graphs") {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(x * x), ContractError);

  // a loss with no requires_grad inputs is legal; nothing to do
  auto c = Tensor::from({2}, {1.0, 2.0});
  backward(sum(c * c));
}

TEST_CASE("gradients do not flow into requires_grad=false inputs") {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  auto k = Tensor::from({2}, {5.0, 5.0});  // constant
  backward(sum(x * k));
  CHECK(x.grad() == std::vector<double>{5.0, 5.0});
  CHECK(k.grad() == std::vector<double>{0.0, 0.0});  // stays zeroed
}

TEST_CASE("matmul gradients against hand algebra") {
  // loss = sum(A*B); dA = ones * B^T, dB = A^T * ones
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12}, true);
  backward(sum(matmul(a, b)));
  // dA rows are the row-sums of B: [15, 19, 23]
  CHECK(a.grad() == std::vector<double>{15, 19, 23, 15, 19, 23});
  // dB rows are the column-sums of A duplicated: col sums of A = [5,7,9]
  CHECK(b.grad() == std::vector<double>{5, 5, 7, 7, 9, 9});
}

namespace {

// Each entry pushes `point` through one op into a scalar, so the finite
// difference probe exercises that op's backprop rule in isolation.
struct OpProbe {
  const char* name;
  std::function<Tensor(const Tensor&)> f;
  Tensor point;
};

std::vector<OpProbe> op_probes() {
  Rng rng(2024);
  auto pt = [&rng](Shape s) {
    return Tensor::uniform(std::move(s), rng, -0.9, 0.9);
  };
  auto mix = Tensor::from({4}, {0.3, -0.7, 0.5, 0.2});
  auto mat = Tensor::from({3, 4}, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8,
                                   -0.9, 1.0, -1.1, 1.2});

  std::vector<OpProbe> probes;
  probes.push_back({"add", [mix](const Tensor& x) { return sum((x + mix) * mix); }, pt({4})});
  probes.push_back({"sub", [mix](const Tensor& x) { return sum((x - mix) * mix); }, pt({4})});
  probes.push_back({"mul", [mix](const Tensor& x) { return sum(x * x * mix); }, pt({4})});
  probes.push_back({"scalar_broadcast",
                    [mix](const Tensor& x) { return sum(x * mix); },
                    Tensor::scalar(0.4)});
  probes.push_back({"tanh", [](const Tensor& x) { return sum(tanh_op(x)); }, pt({4})});
  probes.push_back({"sigmoid", [](const Tensor& x) { return sum(sigmoid(x)); }, pt({4})});
  probes.push_back({"exp", [](const Tensor& x) { return sum(exp_op(x)); }, pt({4})});
  probes.push_back({"log",
                    [](const Tensor& x) { return sum(log_op(add_const(x, 2.0))); },
                    pt({4})});
  probes.push_back({"softplus", [](const Tensor& x) { return sum(softplus(x)); }, pt({4})});
  probes.push_back({"scale", [](const Tensor& x) { return sum(scale(x, -1.7)); }, pt({4})});
  probes.push_back({"add_const",
                    [](const Tensor& x) { return sum(x * x) + add_const(sum(x), 3.0); },
                    pt({4})});
  probes.push_back({"matmul_left",
                    [mix](const Tensor& x) { return sum(matmul(x, mix) * Tensor::from({3}, {1.0, -2.0, 0.5})); },
                    pt({3, 4})});
  probes.push_back({"matmul_right",
                    [mat](const Tensor& x) { return sum(matmul(mat, x) * Tensor::from({3}, {1.0, -2.0, 0.5})); },
                    pt({4})});
  probes.push_back({"matmul_vec_vec",
                    [mix](const Tensor& x) { return matmul(x, mix); },
                    pt({4})});
  probes.push_back({"concat",
                    [mix](const Tensor& x) { return sum(concat(slice(x, 0, 2), slice(x, 2, 2)) * mix); },
                    pt({4})});
  probes.push_back({"slice",
                    [](const Tensor& x) { return sum(slice(x, 1, 2) * slice(x, 0, 2)); },
                    pt({4})});
  probes.push_back({"row",
                    [](const Tensor& x) { return sum(row(x, 1) * row(x, 0)); },
                    pt({2, 3})});
  probes.push_back({"sum", [](const Tensor& x) { return sum(x) * sum(x); }, pt({4})});
  probes.push_back({"softmax",
                    [mix](const Tensor& x) { return sum(softmax(x) * mix); },
                    pt({4})});
  probes.push_back({"softmax_cross_entropy",
                    [](const Tensor& x) { return softmax_cross_entropy(x, 2); },
                    pt({4})});
  return probes;
}

}  // namespace

TEST_CASE("finite differences validate every op's backprop rule") {
  for (auto& probe : op_probes()) {
    const double err = finite_difference_check(probe.f, probe.point, 1e-5);
    INFO("op = ", probe.name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite_difference_check flags a deliberately wrong gradient") {
  // f reports value 2x but gradient of x (off by 2x): build via make-op-free
  // trick — compare d(sum(x))/dx against f(x) = sum(2x).
  auto f = [](const Tensor& x) { return sum(x); };
  // point where f's analytic grad (all ones) disagrees with g below
  auto g = [](const Tensor& x) { return sum(scale(x, 2.0)); };
  auto point = Tensor::from({3}, {0.1, 0.2, 0.3});
  // sanity: honest functions pass
  CHECK(finite_difference_check(f, point, 1e-5) < 1e-6);
  CHECK(finite_difference_check(g, point, 1e-5) < 1e-6);
  // a mismatched pairing (analytic from f, numeric from g) is what the
  // checker exists to catch; emulate by a function that lies about value
  auto liar = [](const Tensor& x) {
    // value path uses 2x, but autodiff sees only x (the scale is applied
    // outside the graph by constructing a detached tensor)
    auto detached = Tensor::from(x.shape(), x.data());
    return sum(x) + sum(detached);  // value = sum(2x), grad = 1 per element
  };
  CHECK(finite_difference_check(liar, point, 1e-5) > 0.3);
}

TEST_CASE("graph rebuilds give bitwise-identical gradients") {
  Rng rng(77);
  auto w = Tensor::uniform({4, 4}, rng, -0.5, 0.5, true);
  auto v = Tensor::uniform({4}, rng, -0.5, 0.5, true);

  auto run = [&]() {
    w.zero_grad();
    v.zero_grad();
    auto h = tanh_op(matmul(w, v));
    auto loss = softmax_cross_entropy(h, 1) + sum(sigmoid(h) * v);
    backward(loss);
    std::vector<double> out = w.grad();
    out.insert(out.end(), v.grad().begin(), v.grad().end());
    return out;
  };
  const auto g1 = run();
  const auto g2 = run();
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("value() and at() enforce their contracts") {
  auto v = Tensor::from({2}, {1.0, 2.0});
  CHECK_THROWS_AS(v.value(), ContractError);
  CHECK_THROWS_AS(v.at(2), ContractError);
  CHECK(v.at(1) == 2.0);
  Tensor undefined;
  CHECK_FALSE(undefined.defined());
  CHECK_THROWS_AS(undefined.size(), ContractError);
}
