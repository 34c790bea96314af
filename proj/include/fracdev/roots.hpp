#pragma once

#include <cmath>
#include <string>

#include "fracdev/error.hpp"

namespace fracdev {

// Root of a strictly monotone function on [lo, hi] with a sign change.
// Bisection to the absolute tolerance, then a single Newton step that is kept
// only if it stays inside the final bracket and does not increase |f|.
template <class F, class DF>
double bracketed_root(F&& f, DF&& df, double lo, double hi, double xtol = 1e-13) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw NumericalError("bracketed_root: no sign change on [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
  }
  for (int it = 0; it < 400 && hi - lo > xtol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  const double x = 0.5 * (lo + hi);
  const double fx = f(x);
  const double slope = df(x);
  if (slope != 0.0 && std::isfinite(slope)) {
    const double polished = x - fx / slope;
    if (polished >= lo && polished <= hi && std::abs(f(polished)) <= std::abs(fx)) return polished;
  }
  return x;
}

}  // namespace fracdev
