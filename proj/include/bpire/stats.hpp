// Small statistics toolbox used by the simulation reports and the test
// suites: running moments, Wilson score intervals, the two-sample
// Kolmogorov-Smirnov test with its asymptotic p-value, one-sided
// two-proportion z tests and truncated total-variation distance.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bpire::stats {

struct MeanVar {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double stderror() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval for k successes out of n at normal quantile z.
Interval wilson(std::size_t k, std::size_t n, double z);

double normal_cdf(double x);
// Inverse standard normal CDF (Acklam's rational approximation + one Halley step).
double normal_quantile(double p);

// Survival function of the Kolmogorov distribution, Q(lambda) = P[K > lambda].
double kolmogorov_sf(double lambda);

struct KsResult {
  double d = 0.0;        // sup |F1 - F2|
  double p_value = 1.0;  // asymptotic, conservative under ties
};

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// One-sided test of H1: p1 > p2 from counts; returns the p-value.
double two_proportion_greater_p(std::size_t k1, std::size_t n1, std::size_t k2, std::size_t n2);

// Half L1 distance between the empirical laws restricted to states
// 0..max_state; counts index the states directly.
double tv_distance(std::span<const std::uint64_t> counts_a, std::size_t n_a,
                   std::span<const std::uint64_t> counts_b, std::size_t n_b,
                   std::size_t max_state);

}  // namespace bpire::stats
