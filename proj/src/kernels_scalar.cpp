#include "nmt/kernels.hpp"

#include <cstring>

// Reference kernels. The reduction order here is the contract: 4 interleaved
// partial accumulators over the first n - n%4 elements, lanes combined as
// (s0+s1)+(s2+s3), then the tail folded in sequentially. The AVX2 backend
// reproduces this order with vector lanes.

namespace nmt::kernels {
namespace {

void k_add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void k_sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void k_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void k_scale(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void k_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double k_dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (std::size_t i = n4; i < n; ++i) s += a[i] * b[i];
  return s;
}

double k_sum(const double* a, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (std::size_t i = n4; i < n; ++i) s += a[i];
  return s;
}

// (m < x) ? x : m, applied lane-wise then combined; matches the AVX2
// cmp+blend sequence bit for bit, including signed zeros.
inline double pick_max(double m, double x) { return (m < x) ? x : m; }

double k_max(const double* a, std::size_t n) {
  if (n < 4) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = pick_max(m, a[i]);
    return m;
  }
  double m0 = a[0], m1 = a[1], m2 = a[2], m3 = a[3];
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 4; i < n4; i += 4) {
    m0 = pick_max(m0, a[i]);
    m1 = pick_max(m1, a[i + 1]);
    m2 = pick_max(m2, a[i + 2]);
    m3 = pick_max(m3, a[i + 3]);
  }
  double m = pick_max(pick_max(m0, m1), pick_max(m2, m3));
  for (std::size_t i = n4; i < n; ++i) m = pick_max(m, a[i]);
  return m;
}

void k_relu(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void k_relu_grad(const double* x, const double* g, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

// Row-oriented update form: each C row accumulates A[i,kk] * B[kk,:] for
// kk = 0..k-1. Output elements are independent across columns, so the
// vectorized backend is bitwise-equal by construction.
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

const Kernels& scalar_kernels() {
  static const Kernels table = {
      "scalar", k_add,  k_sub, k_mul,       k_scale,    k_axpy,
      k_dot,    k_sum,  k_max, k_relu,      k_relu_grad, k_matmul,
  };
  return table;
}

}  // namespace nmt::kernels
