#pragma once

#include <cstddef>

namespace nmt::kernels {

// Table of the primitive array kernels behind every tensor op. Each backend
// (scalar reference, AVX2) implements the same arithmetic in the same order:
// reductions use 4 interleaved partial accumulators over the aligned prefix,
// combined as (s0+s1)+(s2+s3), followed by a sequential tail. Elementwise
// kernels are order-free. Backends must produce bitwise-identical results;
// tests/test_numerics.cpp enforces this.
struct Kernels {
  const char* name;

  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // maximum element, n >= 1
  double (*max)(const double* a, std::size_t n);
  void (*relu)(const double* a, double* out, std::size_t n);
  // out = g where x > 0, else 0
  void (*relu_grad)(const double* x, const double* g, double* out, std::size_t n);
  // C[m x n] = A[m x k] * B[k x n], row-major; C is overwritten
  void (*matmul)(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n);
};

const Kernels& scalar_kernels();

bool avx2_available();
// Valid to call only when avx2_available(); otherwise returns the scalar table.
const Kernels& avx2_kernels();

// AVX2 when the CPU supports it, scalar otherwise. Selected once at startup.
const Kernels& active();

}  // namespace nmt::kernels
