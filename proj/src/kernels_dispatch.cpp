#include "nmt/kernels.hpp"

namespace nmt::kernels {

bool avx2_available() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Kernels& active() {
  static const Kernels& table = avx2_available() ? avx2_kernels() : scalar_kernels();
  return table;
}

}  // namespace nmt::kernels
