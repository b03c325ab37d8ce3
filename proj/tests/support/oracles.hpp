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

#ifndef SEPA_TESTS_SUPPORT_ORACLES_HPP
#define SEPA_TESTS_SUPPORT_ORACLES_HPP

// Test-only oracles. These deliberately share no code with the library:
// KL divergences are recomputed from the definition (integral / expectation)
// so that agreement with the closed forms is evidence, not tautology.

#include <cmath>
#include <cstddef>
#include <vector>

#include "sepa/rng.hpp"

namespace oracle {

inline double normal_log_pdf(double x, double mu, double sigma) {
  static const double kLogSqrt2Pi = 0.9189385332046727417803297;
  const double z = (x - mu) / sigma;
  return -kLogSqrt2Pi - std::log(sigma) - 0.5 * z * z;
}

// KL(q || p) for 1-D Gaussians by composite Simpson quadrature of
// q(x) log(q(x)/p(x)) over [mu_q - 12 sigma_q, mu_q + 12 sigma_q].
// Both log densities are evaluated analytically: in the far tail p(x) can
// underflow to zero while q(x) is still positive, and the naive pdf ratio
// would blow up to infinity there. The tail mass outside the window is below
// e^{-72} times a polynomial, far under the 1e-6 comparison tolerance;
// 20000 panels drive the Simpson error lower yet.
inline double kl_1d_quadrature(double mu_q, double sigma_q, double mu_p,
                               double sigma_p) {
  const double lo = mu_q - 12.0 * sigma_q;
  const double hi = mu_q + 12.0 * sigma_q;
  const int panels = 20000;  // even
  const double h = (hi - lo) / panels;
  auto f = [&](double x) {
    const double log_q = normal_log_pdf(x, mu_q, sigma_q);
    const double log_p = normal_log_pdf(x, mu_p, sigma_p);
    return std::exp(log_q) * (log_q - log_p);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) {
    acc += f(lo + i * h) * ((i % 2) ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

// KL(q || p) for diagonal Gaussians by plain Monte Carlo:
//   E_{z~q}[log q(z) - log p(z)],  z = mu_q + sigma_q * eps,  eps ~ N(0, I).
// Standard error ~ sqrt(Var/n); callers pick n and tolerance together.
inline double kl_diag_monte_carlo(const std::vector<double>& mu_q,
                                  const std::vector<double>& logvar_q,
                                  const std::vector<double>& mu_p,
                                  const std::vector<double>& logvar_p,
                                  std::size_t samples, std::uint64_t seed) {
  const std::size_t d = mu_q.size();
  sepa::Rng rng(seed);
  double acc = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double log_q = 0.0, log_p = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double sd_q = std::exp(0.5 * logvar_q[i]);
      const double z = mu_q[i] + sd_q * rng.normal();
      const double zq = (z - mu_q[i]) / sd_q;
      log_q += -0.5 * zq * zq - 0.5 * logvar_q[i];
      const double sd_p = std::exp(0.5 * logvar_p[i]);
      const double zp = (z - mu_p[i]) / sd_p;
      log_p += -0.5 * zp * zp - 0.5 * logvar_p[i];
    }
    acc += log_q - log_p;  // the shared -d/2 log(2 pi) terms cancel
  }
  return acc / static_cast<double>(samples);
}

}  // namespace oracle

#endif  // SEPA_TESTS_SUPPORT_ORACLES_HPP
