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

#ifndef SEPA_KERNELS_HPP
#define SEPA_KERNELS_HPP

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sepa::kernels {

// Dense kernels in two flavors: a plain serial reference and an OpenMP
// version. Both must produce bit-identical results for the same inputs: the
// parallel versions partition output elements across threads and never change
// the per-element accumulation order, and reductions combine fixed-size chunk
// partials in chunk order. Tests assert the equality; the auto variants pick
// a flavor by work size.

// Work thresholds below which the auto variants stay serial.
inline constexpr std::size_t kMatmulParallelGrain = 1u << 15;  // m*k*n MACs
inline constexpr std::size_t kMapParallelGrain = 1u << 14;     // elements
inline constexpr std::size_t kReduceChunk = 1024;              // elements

// c[m x n] = a[m x k] * b[k x n], row-major.
void matmul_serial(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
void matmul_parallel(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_auto(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);

// c[m x k] += g[m x n] * b[k x n]^T  (gradient w.r.t. the left matmul input)
void matmul_nt_acc_serial(const double* g, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc_parallel(const double* g, const double* b, double* c,
                            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc_auto(const double* g, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);

// c[k x n] += a[m x k]^T * g[m x n]  (gradient w.r.t. the right matmul input)
void matmul_tn_acc_serial(const double* a, const double* g, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_parallel(const double* a, const double* g, double* c,
                            std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_auto(const double* a, const double* g, double* c,
                        std::size_t m, std::size_t k, std::size_t n);

// y[i] = f(x[i])
template <class F>
void map_serial(const double* x, double* y, std::size_t n, F f) {
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class F>
void map_parallel(const double* x, double* y, std::size_t n, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    y[i] = f(x[i]);
  }
#else
  map_serial(x, y, n, f);
#endif
}

template <class F>
void map_auto(const double* x, double* y, std::size_t n, F f) {
  if (n >= kMapParallelGrain) {
    map_parallel(x, y, n, f);
  } else {
    map_serial(x, y, n, f);
  }
}

// Plain left-to-right sum; the reference everything small uses.
double reduce_sum_serial(const double* x, std::size_t n);
// Fixed-chunk partial sums combined in chunk order. The chunk layout depends
// only on n, never on the thread count, so the serial and parallel flavors
// are bit-identical to each other (though not to the left-to-right sum).
double reduce_sum_chunked_serial(const double* x, std::size_t n);
double reduce_sum_chunked_parallel(const double* x, std::size_t n);

}  // namespace sepa::kernels

#endif  // SEPA_KERNELS_HPP
