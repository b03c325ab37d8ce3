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

#include "sepa/kernels.hpp"

#include <vector>

namespace sepa::kernels {

void matmul_serial(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) {
        acc += a[i * k + l] * b[l * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

void matmul_parallel(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) {
        acc += a[i * k + l] * b[l * n + j];
      }
      c[i * n + j] = acc;
    }
  }
#else
  matmul_serial(a, b, c, m, k, n);
#endif
}

void matmul_auto(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  if (m * k * n >= kMatmulParallelGrain && m > 1) {
    matmul_parallel(a, b, c, m, k, n);
  } else {
    matmul_serial(a, b, c, m, k, n);
  }
}

void matmul_nt_acc_serial(const double* g, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += g[i * n + j] * b[l * n + j];
      }
      c[i * k + l] += acc;
    }
  }
}

void matmul_nt_acc_parallel(const double* g, const double* b, double* c,
                            std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += g[i * n + j] * b[l * n + j];
      }
      c[i * k + l] += acc;
    }
  }
#else
  matmul_nt_acc_serial(g, b, c, m, k, n);
#endif
}

void matmul_nt_acc_auto(const double* g, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= kMatmulParallelGrain && m > 1) {
    matmul_nt_acc_parallel(g, b, c, m, k, n);
  } else {
    matmul_nt_acc_serial(g, b, c, m, k, n);
  }
}

void matmul_tn_acc_serial(const double* a, const double* g, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        acc += a[i * k + l] * g[i * n + j];
      }
      c[l * n + j] += acc;
    }
  }
}

void matmul_tn_acc_parallel(const double* a, const double* g, double* c,
                            std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long l = 0; l < static_cast<long long>(k); ++l) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        acc += a[i * k + l] * g[i * n + j];
      }
      c[l * n + j] += acc;
    }
  }
#else
  matmul_tn_acc_serial(a, g, c, m, k, n);
#endif
}

void matmul_tn_acc_auto(const double* a, const double* g, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= kMatmulParallelGrain && k > 1) {
    matmul_tn_acc_parallel(a, g, c, m, k, n);
  } else {
    matmul_tn_acc_serial(a, g, c, m, k, n);
  }
}

double reduce_sum_serial(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

static std::size_t chunk_count(std::size_t n) {
  return (n + kReduceChunk - 1) / kReduceChunk;
}

double reduce_sum_chunked_serial(const double* x, std::size_t n) {
  const std::size_t chunks = chunk_count(n);
  std::vector<double> partial(chunks, 0.0);
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    const std::size_t lo = ci * kReduceChunk;
    const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += x[i];
    partial[ci] = acc;
  }
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks; ++ci) total += partial[ci];
  return total;
}

double reduce_sum_chunked_parallel(const double* x, std::size_t n) {
#ifdef _OPENMP
  const std::size_t chunks = chunk_count(n);
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (long long ci = 0; ci < static_cast<long long>(chunks); ++ci) {
    const std::size_t lo = static_cast<std::size_t>(ci) * kReduceChunk;
    const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += x[i];
    partial[ci] = acc;
  }
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks; ++ci) total += partial[ci];
  return total;
#else
  return reduce_sum_chunked_serial(x, n);
#endif
}

}  // namespace sepa::kernels
