#pragma once

#include <functional>
#include <span>
#include <vector>

namespace prouter {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using ScalarFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<std::vector<double>(std::span<const double>)>;

// Compares the analytic gradient with central differences
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) coordinate by coordinate.
// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
// coordinates whose true gradient is zero from dividing by rounding noise.
[[nodiscard]] GradCheckResult grad_check(const ScalarFunction& f, const GradientFunction& grad,
                                         std::span<const double> point, double eps = 1e-5,
                                         double floor = 1e-6);

}  // namespace prouter
