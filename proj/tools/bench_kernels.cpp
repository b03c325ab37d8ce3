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

// Benchmark of the serial reference kernels against their OpenMP variants.
// The parallel kernels must produce bit-identical output (each output slot
// is computed by exactly one thread with a fixed inner summation order), so
// besides timing, this tool fails loudly if any pair ever disagrees.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sepa/kernels.hpp"
#include "sepa/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class Fn>
double time_best_of(int reps, Fn fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

bool g_all_identical = true;

void check_identical(const std::vector<double>& a,
                     const std::vector<double>& b, const char* what) {
  if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
    std::printf("MISMATCH: %s serial and parallel outputs differ\n", what);
    g_all_identical = false;
  }
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled; parallel kernels fall back to serial\n");
#endif
  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial(s)", "parallel(s)",
              "speedup");

  sepa::Rng rng(1234);
  const int reps = 5;

  for (std::size_t dim : {64, 128, 256, 512}) {
    const std::size_t m = dim, k = dim, n = dim;
    std::vector<double> a(m * k), b(k * n), cs(m * n), cp(m * n);
    for (auto& v : a) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);

    const double ts = time_best_of(
        reps, [&] { sepa::kernels::matmul_serial(a.data(), b.data(),
                                                 cs.data(), m, k, n); });
    const double tp = time_best_of(
        reps, [&] { sepa::kernels::matmul_parallel(a.data(), b.data(),
                                                   cp.data(), m, k, n); });
    check_identical(cs, cp, "matmul");
    std::printf("matmul %4zux%-4zu              %10.5f %10.5f %7.2fx\n", dim,
                dim, ts, tp, ts / tp);
  }

  for (std::size_t dim : {256, 512}) {
    const std::size_t m = dim, k = dim, n = dim;
    std::vector<double> g(m * n), b(k * n), as(m * k, 0.0), ap(m * k, 0.0);
    for (auto& v : g) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);

    const double ts = time_best_of(reps, [&] {
      std::fill(as.begin(), as.end(), 0.0);
      sepa::kernels::matmul_nt_acc_serial(g.data(), b.data(), as.data(), m, k,
                                          n);
    });
    const double tp = time_best_of(reps, [&] {
      std::fill(ap.begin(), ap.end(), 0.0);
      sepa::kernels::matmul_nt_acc_parallel(g.data(), b.data(), ap.data(), m,
                                            k, n);
    });
    check_identical(as, ap, "matmul_nt_acc");
    std::printf("matmul_nt_acc %4zux%-4zu       %10.5f %10.5f %7.2fx\n", dim,
                dim, ts, tp, ts / tp);
  }

  {
    const std::size_t n = 1 << 22;
    std::vector<double> x(n), ys(n), yp(n);
    for (auto& v : x) v = rng.uniform(-3.0, 3.0);
    const auto f = [](double v) { return std::tanh(v); };
    const double ts = time_best_of(
        reps, [&] { sepa::kernels::map_serial(x.data(), ys.data(), n, f); });
    const double tp = time_best_of(
        reps, [&] { sepa::kernels::map_parallel(x.data(), yp.data(), n, f); });
    check_identical(ys, yp, "map(tanh)");
    std::printf("map tanh n=%-9zu         %10.5f %10.5f %7.2fx\n", n, ts, tp,
                ts / tp);
  }

  {
    const std::size_t n = 1 << 24;
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    double ss = 0.0, sp = 0.0;
    const double ts = time_best_of(reps, [&] {
      ss = sepa::kernels::reduce_sum_chunked_serial(x.data(), n);
    });
    const double tp = time_best_of(reps, [&] {
      sp = sepa::kernels::reduce_sum_chunked_parallel(x.data(), n);
    });
    if (std::memcmp(&ss, &sp, sizeof(double)) != 0) {
      std::printf("MISMATCH: reduce_sum_chunked serial/parallel differ\n");
      g_all_identical = false;
    }
    std::printf("reduce_sum n=%-9zu       %10.5f %10.5f %7.2fx\n", n, ts, tp,
                ts / tp);
  }

  if (!g_all_identical) {
    std::printf("FAIL: at least one kernel pair was not bit-identical\n");
    return 1;
  }
  std::printf("all kernel pairs bit-identical\n");
  return 0;
}
