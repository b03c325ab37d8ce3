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
#include <sstream>

#include "sepa/error.hpp"
#include "sepa/rng.hpp"
#include "sepa/theory.hpp"
#include "support/oracles.hpp"

using namespace sepa;
using theory::Gauss1;

TEST_CASE("kl_1d: zero at equality, hand value, sigma contract") {
  CHECK(theory::kl_1d({0.7, 1.3}, {0.7, 1.3}) == 0.0);
  // KL(N(1,1) || N(0,1)) = 0 + (1 + 1)/2 - 1/2 = 1/2
  CHECK(theory::kl_1d({1.0, 1.0}, {0.0, 1.0}) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(theory::kl_1d({0.0, 0.0}, {0.0, 1.0}), ContractError);
  CHECK_THROWS_AS(theory::kl_1d({0.0, 1.0}, {0.0, -2.0}), ContractError);
}

TEST_CASE("kl_1d matches Simpson quadrature of the defining integral") {
  Rng rng(515);
  for (int i = 0; i < 50; ++i) {
    const double mu_q = rng.uniform(-5.0, 5.0);
    const double sg_q = rng.uniform(0.1, 3.0);
    const double mu_p = rng.uniform(-5.0, 5.0);
    const double sg_p = rng.uniform(0.1, 3.0);
    const double closed = theory::kl_1d({mu_q, sg_q}, {mu_p, sg_p});
    const double integral = oracle::kl_1d_quadrature(mu_q, sg_q, mu_p, sg_p);
    INFO("instance ", i, ": q=(", mu_q, ",", sg_q, ") p=(", mu_p, ",", sg_p,
         ")");
    CHECK(std::fabs(closed - integral) < 1e-6);
  }
}

TEST_CASE("phi: zero at the shared distribution, hand value, identity") {
  CHECK(theory::phi(0.3, 0.9, {0.3, 0.9}, {0.3, 0.9}) ==
        doctest::Approx(0.0).epsilon(1e-15));
  // mu1=-2, mu2=2, sigma1=sigma2=1, prior (0, sqrt 5):
  // log(5/1) + (1+1+4+4)/10 - 1 = log 5
  CHECK(theory::phi(0.0, std::sqrt(5.0), {-2.0, 1.0}, {2.0, 1.0}) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-14));
  CHECK(std::log(5.0) == doctest::Approx(1.6094379124341003).epsilon(1e-15));

  // phi == kl + kl as an algebraic identity
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const Gauss1 p1{rng.uniform(-5.0, 5.0), rng.uniform(0.1, 3.0)};
    const Gauss1 p2{rng.uniform(-5.0, 5.0), rng.uniform(0.1, 3.0)};
    const double mu = rng.uniform(-6.0, 6.0);
    const double sg = rng.uniform(0.1, 4.0);
    const double lhs = theory::phi(mu, sg, p1, p2);
    const double rhs =
        theory::kl_1d(p1, {mu, sg}) + theory::kl_1d(p2, {mu, sg});
    CHECK(std::fabs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("analytic_minimizer: degenerate case, hand value, monotonicity") {
  const Gauss1 same{1.2, 0.8};
  const Gauss1 m0 = theory::analytic_minimizer(same, same);
  CHECK(m0.mu == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(m0.sigma == doctest::Approx(0.8).epsilon(1e-15));

  const Gauss1 m1 = theory::analytic_minimizer({-2.0, 1.0}, {2.0, 1.0});
  CHECK(m1.mu == 0.0);
  CHECK(m1.sigma == doctest::Approx(2.23606797749979).epsilon(1e-15));

  // widening the mean gap strictly inflates sigma*
  double prev = 0.0;
  for (int k = 0; k < 8; ++k) {
    const double gap = 0.5 * k;
    const Gauss1 m =
        theory::analytic_minimizer({-gap, 0.7}, {gap, 0.7});
    if (k > 0) CHECK(m.sigma > prev);
    prev = m.sigma;
  }
}

TEST_CASE("numeric_minimizer agrees with the closed form on 100 instances") {
  const auto rows = theory::run_minimizer_verification(100, 2026);
  CHECK(rows.size() == 100);
  for (const auto& r : rows) {
    INFO("instance ", r.instance, " gap ", r.gap);
    CHECK(r.gap < 1e-3);
  }
}

TEST_CASE("numeric_minimizer: symmetry and optimality") {
  // symmetric posteriors: mu_hat lands at the midpoint
  const Gauss1 n = theory::numeric_minimizer({-3.0, 0.5}, {3.0, 0.5});
  CHECK(std::fabs(n.mu - 0.0) < 1e-3);

  Rng rng(61);
  for (int i = 0; i < 20; ++i) {
    const Gauss1 p1{rng.uniform(-4.0, 4.0), rng.uniform(0.2, 2.5)};
    const Gauss1 p2{rng.uniform(-4.0, 4.0), rng.uniform(0.2, 2.5)};
    const Gauss1 a = theory::analytic_minimizer(p1, p2);
    const Gauss1 h = theory::numeric_minimizer(p1, p2);
    // by definition of a minimizer the numeric value can't beat the analytic
    // one by more than numerical fuzz
    CHECK(theory::phi(h.mu, h.sigma, p1, p2) <=
          theory::phi(a.mu, a.sigma, p1, p2) + 1e-6);
  }
}

TEST_CASE("sigma inflation: prior spread exceeds both posteriors when means split") {
  Rng rng(62);
  for (int i = 0; i < 200; ++i) {
    const Gauss1 p1{rng.uniform(-5.0, 5.0), rng.uniform(0.1, 3.0)};
    const Gauss1 p2{rng.uniform(-5.0, 5.0), rng.uniform(0.1, 3.0)};
    const double smax = std::max(p1.sigma, p2.sigma);
    if (std::fabs(p1.mu - p2.mu) > std::sqrt(2.0) * smax) {
      const Gauss1 m = theory::analytic_minimizer(p1, p2);
      CHECK(m.sigma > p1.sigma);
      CHECK(m.sigma > p2.sigma);
    }
  }
}

TEST_CASE("dynamics: one prior chasing two posteriors lands on the minimizer") {
  theory::DynamicsConfig cfg;
  cfg.scenario = theory::Scenario::one_to_many;
  cfg.steps = 4000;
  cfg.learning_rate = 0.05;
  cfg.posterior1 = {-2.0, 1.0};
  cfg.posterior2 = {2.0, 1.0};
  cfg.init_prior_a = {0.5, 0.5};
  const auto traj = theory::simulate_training_dynamics(cfg);
  REQUIRE(traj.size() == 4001);
  const Gauss1 want = theory::analytic_minimizer(cfg.posterior1, cfg.posterior2);
  const Gauss1 got = traj.back().prior_a;
  CHECK(std::fabs(got.mu - want.mu) < 1e-3);
  CHECK(std::fabs(got.sigma - want.sigma) < 1e-3);
  // descent: objective never increases meaningfully along the way
  for (std::size_t i = 1; i < traj.size(); ++i) {
    CHECK(traj[i].objective <= traj[i - 1].objective + 1e-12);
  }
}

TEST_CASE("dynamics: two priors sharing one posterior pull together") {
  theory::DynamicsConfig cfg;
  cfg.scenario = theory::Scenario::many_to_one;
  cfg.steps = 1500;
  cfg.learning_rate = 0.05;
  cfg.posterior1 = {1.0, 0.8};
  cfg.init_prior_a = {-3.0, 0.5};
  cfg.init_prior_b = {4.0, 1.5};
  const auto traj = theory::simulate_training_dynamics(cfg);
  const double initial_gap =
      std::fabs(cfg.init_prior_a.mu - cfg.init_prior_b.mu);
  const double final_gap =
      std::fabs(traj.back().prior_a.mu - traj.back().prior_b.mu);
  CHECK(final_gap < initial_gap);
  CHECK(final_gap < 1e-2);  // both sit on the shared posterior's mean
  CHECK(std::fabs(traj.back().prior_a.mu - 1.0) < 1e-2);
  CHECK(std::fabs(traj.back().prior_b.sigma - 0.8) < 1e-2);
}

TEST_CASE("dynamics: zero steps returns the initial state; contracts hold") {
  theory::DynamicsConfig cfg;
  cfg.steps = 0;
  const auto traj = theory::simulate_training_dynamics(cfg);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0].prior_a.mu == cfg.init_prior_a.mu);
  CHECK(traj[0].prior_a.sigma == cfg.init_prior_a.sigma);

  cfg.steps = -1;
  CHECK_THROWS_AS(theory::simulate_training_dynamics(cfg), ContractError);

  cfg.steps = 10;
  cfg.posterior1.sigma = 0.0;
  CHECK_THROWS_AS(theory::simulate_training_dynamics(cfg), ContractError);
}

TEST_CASE("dynamics: a runaway learning rate is reported with its step") {
  theory::DynamicsConfig cfg;
  cfg.steps = 50;
  cfg.learning_rate = 1e6;
  try {
    theory::simulate_training_dynamics(cfg);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("verification CSV: header, row count, finite round-trip") {
  const auto rows = theory::run_minimizer_verification(5, 7);
  std::ostringstream os;
  theory::write_verification_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "instance,mu_star,sigma_star,mu_hat,sigma_hat,gap");
  int count = 0;
  while (std::getline(is, line)) {
    int inst;
    double a, b, c, d, g;
    REQUIRE(std::sscanf(line.c_str(), "%d,%lg,%lg,%lg,%lg,%lg", &inst, &a, &b,
                        &c, &d, &g) == 6);
    CHECK(inst == count);
    CHECK(std::isfinite(g));
    ++count;
  }
  CHECK(count == 5);
}

TEST_CASE("verification runs are deterministic") {
  const auto r1 = theory::run_minimizer_verification(10, 99);
  const auto r2 = theory::run_minimizer_verification(10, 99);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].analytic.mu == r2[i].analytic.mu);
    CHECK(r1[i].numeric.mu == r2[i].numeric.mu);
    CHECK(r1[i].numeric.sigma == r2[i].numeric.sigma);
  }
}
