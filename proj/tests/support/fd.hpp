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

#ifndef SEPA_TESTS_SUPPORT_FD_HPP
#define SEPA_TESTS_SUPPORT_FD_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sepa/tensor.hpp"

namespace testsupport {

// Central-difference sweep over every coordinate of every listed parameter
// against one analytic backward pass of the loss `build` constructs. The
// builder must be a pure function of the parameter values (any randomness
// replayed from a fixed seed), because it is re-run for every probe.
// Returns the worst relative error with denominator
// max(|analytic|, |numeric|, floor). The floor matters: for a loss of
// magnitude L the difference quotient carries ~eps_machine * L / eps_fd of
// cancellation noise, so gradients far below that are only checkable in
// absolute terms against the floor.
inline double max_fd_error(
    const std::vector<std::pair<std::string, sepa::Tensor>>& params,
    const std::function<sepa::Tensor()>& build, double eps_fd,
    double floor = 1e-6) {
  for (const auto& [name, p] : params) {
    sepa::Tensor(p).zero_grad();
  }
  sepa::Tensor loss = build();
  sepa::backward(loss);
  double worst = 0.0;
  for (const auto& [name, p] : params) {
    sepa::Tensor t(p);
    const std::vector<double> analytic = t.grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.mutable_data()[i] = saved + eps_fd;
      const double up = build().value();
      t.mutable_data()[i] = saved - eps_fd;
      const double down = build().value();
      t.mutable_data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps_fd);
      const double denom =
          std::max({std::fabs(analytic[i]), std::fabs(numeric), floor});
      worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace testsupport

#endif  // SEPA_TESTS_SUPPORT_FD_HPP
