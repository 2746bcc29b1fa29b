#include "ope/quadrature.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "ope/error.hpp"

namespace ope {

namespace {

struct Panel {
  double a, b, fa, fm, fb, whole, tol;
};

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, const QuadratureOptions& opt) {
  QuadratureResult out;
  if (b == a) return out;

  std::vector<Panel> stack;
  const int panels = opt.initial_panels < 1 ? 1 : opt.initial_panels;
  const double width = (b - a) / panels;
  for (int k = panels - 1; k >= 0; --k) {
    const double lo = a + width * k;
    const double hi = (k == panels - 1) ? b : lo + width;
    const double mid = 0.5 * (lo + hi);
    const double flo = f(lo), fmid = f(mid), fhi = f(hi);
    stack.push_back({lo, hi, flo, fmid, fhi, simpson(lo, hi, flo, fmid, fhi),
                     opt.abs_tol / panels});
  }

  while (!stack.empty()) {
    Panel p = stack.back();
    stack.pop_back();
    const double m = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + m), rm = 0.5 * (m + p.b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(p.a, m, p.fa, flm, p.fm);
    const double right = simpson(m, p.b, p.fm, frm, p.fb);
    const double diff = left + right - p.whole;
    if (!std::isfinite(diff)) {
      throw QuadratureError("non-finite integrand near x=" + std::to_string(m),
                            INFINITY);
    }
    if (std::fabs(diff) <= 15.0 * p.tol) {
      out.value += left + right + diff / 15.0;
      out.error_estimate += std::fabs(diff) / 15.0;
      continue;
    }
    if (++out.subdivisions > opt.max_subdivisions) {
      double pending = std::fabs(diff) / 15.0;
      for (const Panel& q : stack) pending += q.tol;
      throw QuadratureError(
          "adaptive Simpson exceeded subdivision budget; achieved tolerance " +
              std::to_string(out.error_estimate + pending),
          out.error_estimate + pending);
    }
    stack.push_back({m, p.b, p.fm, frm, p.fb, right, 0.5 * p.tol});
    stack.push_back({p.a, m, p.fa, flm, p.fm, left, 0.5 * p.tol});
  }
  return out;
}

}  // namespace ope
