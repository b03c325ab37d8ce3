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

#ifndef SEPA_THEORY_HPP
#define SEPA_THEORY_HPP

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace sepa::theory {

// One-dimensional Gaussian, the unit of the latent-collapse analysis. The
// multivariate diagonal case factorizes into independent copies of this.
struct Gauss1 {
  double mu = 0.0;
  double sigma = 1.0;  // invariant: sigma > 0
};

// KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)), natural log:
//   log(sigma_p/sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2
double kl_1d(const Gauss1& q, const Gauss1& p);

// phi(mu, sigma) = KL(post1 || N(mu, sigma^2)) + KL(post2 || N(mu, sigma^2)),
// written out as the single closed-form expression
//   log(sigma^2/(sigma_1 sigma_2))
//   + (sigma_1^2 + sigma_2^2 + (mu_1-mu)^2 + (mu_2-mu)^2) / (2 sigma^2) - 1.
// The identity phi == kl_1d + kl_1d is asserted by tests, not assumed here.
double phi(double mu, double sigma, const Gauss1& post1, const Gauss1& post2);

// The closed-form argmin of phi:
//   mu*    = (mu_1 + mu_2) / 2
//   sigma* = sqrt((sigma_1^2 + sigma_2^2)/2 + (mu_1 - mu_2)^2/4)
// This is the analysis's central claim: one prior forced to cover two
// posteriors lands between them with inflated variance.
Gauss1 analytic_minimizer(const Gauss1& post1, const Gauss1& post2);

// Independent numerical check of the closed form: coarse grid search over
// mu in [min mu - 3 sigma_max, max mu + 3 sigma_max], sigma in (0, 4 sigma_max],
// then alternating per-coordinate ternary refinement down to 1e-6. Shares no
// algebra with analytic_minimizer beyond phi itself.
Gauss1 numeric_minimizer(const Gauss1& post1, const Gauss1& post2);

// Toy gradient-descent realizations of the collapse dynamics.
//   one_to_many: a single prior chases two fixed posteriors; its endpoint
//                should approach the phi minimizer.
//   many_to_one: two priors chase one shared posterior; their means should
//                converge toward each other.
enum class Scenario { one_to_many, many_to_one };

struct DynamicsPoint {
  Gauss1 prior_a;
  Gauss1 prior_b;     // untouched in one_to_many
  double objective;   // KL objective at this step
};

struct DynamicsConfig {
  Scenario scenario = Scenario::one_to_many;
  int steps = 2000;
  double learning_rate = 0.05;
  Gauss1 posterior1{-2.0, 1.0};
  Gauss1 posterior2{2.0, 1.0};   // ignored by many_to_one
  Gauss1 init_prior_a{0.5, 0.5};
  Gauss1 init_prior_b{3.0, 0.5}; // ignored by one_to_many
};

// Plain gradient descent on (mu, log sigma) of the prior(s) with the
// posteriors frozen. Returns the full trajectory, entry 0 being the initial
// state (steps == 0 yields just that entry). Non-finite state at any step
// raises a numeric error naming the step.
std::vector<DynamicsPoint> simulate_training_dynamics(
    const DynamicsConfig& config);

// One row of the minimizer verification: a seeded random instance, both
// solvers' answers, and the worst coordinate gap between them.
struct VerificationRow {
  int instance = 0;
  Gauss1 analytic;
  Gauss1 numeric;
  double gap = 0.0;  // max(|mu* - mu_hat|, |sigma* - sigma_hat|)
};

// Runs `instances` seeded random cases with mu in [-5, 5], sigma in [0.1, 3].
std::vector<VerificationRow> run_minimizer_verification(int instances,
                                                        std::uint64_t seed);

// CSV with header instance,mu_star,sigma_star,mu_hat,sigma_hat,gap.
void write_verification_csv(std::ostream& os,
                            const std::vector<VerificationRow>& rows);

}  // namespace sepa::theory

#endif  // SEPA_THEORY_HPP
