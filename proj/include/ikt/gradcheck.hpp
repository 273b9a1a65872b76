#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace ikt::num {

// Central finite-difference check of an analytic gradient. `f` is a scalar
// function of the buffer `x` (captured by reference); each component is
// perturbed by +-h in turn and restored. Returns the worst component error
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
template <typename F>
double grad_check(F&& f, std::vector<double>& x,
                  const std::vector<double>& analytic, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom =
        std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace ikt::num
