#pragma once

// Independent brute-force references. Nothing here calls the library's
// ascent code.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>

namespace arks::testing {

struct GridMax {
  double value = -std::numeric_limits<double>::infinity();
  double arg = 0.0;
};

// max of f over lo, lo + step, ..., hi
inline GridMax grid_max_1d(const std::function<double(double)>& f, double lo, double hi, double step) {
  GridMax best;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) {
    const double u = i == n ? hi : lo + static_cast<double>(i) * step;
    const double v = f(u);
    if (v > best.value) best = {v, u};
  }
  return best;
}

struct GridMax2 {
  double value = -std::numeric_limits<double>::infinity();
  double u0 = 0.0;
  double u1 = 0.0;
};

inline GridMax2 grid_max_2d(const std::function<double(double, double)>& f, double lo, double hi, double step) {
  GridMax2 best;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) {
    const double a = lo + static_cast<double>(i) * step;
    for (long j = 0; j <= n; ++j) {
      const double b = lo + static_cast<double>(j) * step;
      const double v = f(a, b);
      if (v > best.value) best = {v, a, b};
    }
  }
  return best;
}

inline double gaussian(double u, double x, double sigma) { return std::exp(-(u - x) * (u - x) / (2.0 * sigma)); }

}  // namespace arks::testing
