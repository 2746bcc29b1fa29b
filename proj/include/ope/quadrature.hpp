#pragma once

#include <functional>

namespace ope {

struct QuadratureOptions {
  double abs_tol = 1e-8;
  long max_subdivisions = 1L << 20;
  int initial_panels = 16;
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  long subdivisions = 0;
};

// Adaptive Simpson on [a, b]. Throws QuadratureError when the subdivision
// budget runs out before every panel meets its share of abs_tol.
QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, const QuadratureOptions& opt = {});

}  // namespace ope
