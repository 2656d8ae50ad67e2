#pragma once

#include <functional>

namespace macml {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int intervals = 0;
};

// Globally adaptive 15-point Gauss-Kronrod integration on [a, b]: the
// interval with the largest error estimate is bisected until the summed
// estimate falls below `abs_tol` or `max_intervals` is reached.
QuadratureResult integrate_gk15(const std::function<double(double)>& f, double a, double b,
                                double abs_tol, int max_intervals = 500);

inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                 double abs_tol) {
  return integrate_gk15(f, a, b, abs_tol).value;
}

}  // namespace macml
