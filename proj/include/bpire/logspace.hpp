#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace bpire {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(e^a + e^b), safe for -inf arguments.
inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b);
  double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace bpire
