#include "nmt/kernels.hpp"

#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define NMT_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define NMT_HAVE_AVX2_BUILD 0
#endif

// AVX2 variants of the scalar reference kernels. Compiled with -mavx2 but
// without FMA so that mul-then-add rounds exactly like the scalar path.
// Reductions keep the scalar contract: the 4 vector lanes are the 4 partial
// accumulators, combined as (s0+s1)+(s2+s3), sequential tail afterwards.

namespace nmt::kernels {

#if NMT_HAVE_AVX2_BUILD

namespace {

void k_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void k_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void k_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void k_scale(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void k_axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

inline double combine_lanes_sum(__m256d acc) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double k_dot(const double* a, const double* b, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < n4; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                           _mm256_loadu_pd(b + i)));
  }
  double s = combine_lanes_sum(acc);
  for (std::size_t i = n4; i < n; ++i) s += a[i] * b[i];
  return s;
}

double k_sum(const double* a, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < n4; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  }
  double s = combine_lanes_sum(acc);
  for (std::size_t i = n4; i < n; ++i) s += a[i];
  return s;
}

inline double pick_max(double m, double x) { return (m < x) ? x : m; }

double k_max(const double* a, std::size_t n) {
  if (n < 4) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = pick_max(m, a[i]);
    return m;
  }
  const std::size_t n4 = n - n % 4;
  __m256d acc = _mm256_loadu_pd(a);
  for (std::size_t i = 4; i < n4; i += 4) {
    __m256d x = _mm256_loadu_pd(a + i);
    // (acc < x) ? x : acc, same tie/zero behavior as the scalar pick_max
    __m256d lt = _mm256_cmp_pd(acc, x, _CMP_LT_OQ);
    acc = _mm256_blendv_pd(acc, x, lt);
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double m = pick_max(pick_max(lane[0], lane[1]), pick_max(lane[2], lane[3]));
  for (std::size_t i = n4; i < n; ++i) m = pick_max(m, a[i]);
  return m;
}

void k_relu(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d x = _mm256_loadu_pd(a + i);
    __m256d gt = _mm256_cmp_pd(x, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(x, gt));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void k_relu_grad(const double* x, const double* g, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gt = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_loadu_pd(g + i), gt));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void k_matmul(const double* a, const double* b, double* c,
              std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      k_axpy(arow[kk], b + kk * n, crow, n);
    }
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels table = {
      "avx2", k_add,  k_sub, k_mul,       k_scale,     k_axpy,
      k_dot,  k_sum,  k_max, k_relu,      k_relu_grad, k_matmul,
  };
  return table;
}

#else  // !NMT_HAVE_AVX2_BUILD

const Kernels& avx2_kernels() { return scalar_kernels(); }

#endif

}  // namespace nmt::kernels
