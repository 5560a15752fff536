#ifndef JUMPFILTER_STATS_HPP
#define JUMPFILTER_STATS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

namespace jumpfilter {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Kolmogorov-Smirnov statistic of a sample against the standard normal.
inline double ks_statistic_standard_normal(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = normal_cdf(xs[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

// Critical value of the KS statistic (Stephens' approximation). K(0.01)
// and K(0.05) are the usual Kolmogorov quantiles.
inline double ks_critical_value(double alpha, std::size_t n) {
  double k;
  if (alpha <= 0.01)
    k = 1.62762;
  else if (alpha <= 0.05)
    k = 1.35810;
  else
    k = 1.22385;  // alpha = 0.10
  const double sn = std::sqrt(static_cast<double>(n));
  return k / (sn + 0.12 + 0.11 / sn);
}

}  // namespace jumpfilter

#endif
