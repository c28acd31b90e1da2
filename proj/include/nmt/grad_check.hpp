#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nmt/parameters.hpp"

namespace nmt {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t flagged = 0;  // elements whose relative error exceeds tol
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  std::size_t flagged = 0;

  bool ok() const { return flagged == 0; }
};

// Central finite differences of the scalar function f at `at`, compared
// element by element against `analytic`. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12). f must be pure;
// a non-finite value of f aborts with std::runtime_error.
GradCheckReport grad_check(const std::function<double(const Parameters&)>& f,
                           const Parameters& at, const Parameters& analytic,
                           double h, double tol);

}  // namespace nmt
