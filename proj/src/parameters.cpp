#include "nmt/parameters.hpp"

#include <stdexcept>

#include "nmt/kernels.hpp"

namespace nmt {

Parameters zeros_like(const Parameters& p) {
  Parameters out;
  for (const auto& [name, t] : p) out.emplace(name, Tensor(t.shape()));
  return out;
}

void add_scaled(Parameters& acc, const Parameters& g, double s) {
  for (const auto& [name, gt] : g) {
    auto it = acc.find(name);
    if (it == acc.end() || !it->second.same_shape(gt)) {
      throw std::invalid_argument("add_scaled: parameter mismatch at '" + name + "'");
    }
    kernels::active().axpy(s, gt.data(), it->second.data(), gt.size());
  }
}

std::size_t total_elements(const Parameters& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : p) n += t.size();
  return n;
}

bool all_finite(const Parameters& p) {
  for (const auto& [name, t] : p) {
    if (!t.all_finite()) return false;
  }
  return true;
}

}  // namespace nmt
