#include "nmt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nmt {

GradCheckReport grad_check(const std::function<double(const Parameters&)>& f,
                           const Parameters& at, const Parameters& analytic,
                           double h, double tol) {
  GradCheckReport report;
  Parameters work = at;
  for (auto& [name, tensor] : work) {
    auto ga = analytic.find(name);
    if (ga == analytic.end() || !ga->second.same_shape(tensor)) {
      throw std::invalid_argument("grad_check: analytic gradient missing or mis-shaped for '" +
                                  name + "'");
    }
    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor(i);
      tensor(i) = saved + h;
      const double fp = f(work);
      tensor(i) = saved - h;
      const double fm = f(work);
      tensor(i) = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("grad_check: f returned a non-finite value at '" + name + "'");
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = ga->second(i);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      const double rel = std::fabs(a - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      if (rel > tol) ++entry.flagged;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.flagged += entry.flagged;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace nmt
