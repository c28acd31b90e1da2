#pragma once

#include <map>
#include <string>

#include "nmt/tensor.hpp"

namespace nmt {

// Named tensors. std::map gives the deterministic lexicographic iteration
// order that serialization, Adam, and gradient accumulation all rely on.
using Parameters = std::map<std::string, Tensor>;

Parameters zeros_like(const Parameters& p);

// acc += s * g; shapes must match key for key
void add_scaled(Parameters& acc, const Parameters& g, double s);

std::size_t total_elements(const Parameters& p);

bool all_finite(const Parameters& p);

}  // namespace nmt
