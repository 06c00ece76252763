#include "prouter/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace prouter {

GradCheckResult grad_check(const ScalarFunction& f, const GradientFunction& grad,
                           std::span<const double> point, double eps, double floor) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  const std::vector<double> analytic = grad(point);
  if (analytic.size() != point.size()) {
    throw std::invalid_argument("grad_check: gradient has " + std::to_string(analytic.size()) +
                                " entries for " + std::to_string(point.size()) + " coordinates");
  }
  std::vector<double> x(point.begin(), point.end());
  GradCheckResult res;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error("grad_check: non-finite function value at coordinate " +
                              std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > res.max_relative_error) {
      res.max_relative_error = rel;
      res.worst_index = i;
      res.analytic = analytic[i];
      res.numeric = numeric;
    }
  }
  return res;
}

}  // namespace prouter
