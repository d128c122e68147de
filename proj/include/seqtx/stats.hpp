#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace seqtx {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y ≈ intercept + slope·x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Fit r_n ≈ A δ^n through log r_n on the entries with r_n > floor.
struct ExpFit {
  double A = 0.0;
  double delta = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

ExpFit fit_exponential(std::span<const double> n, std::span<const double> r, double floor);

double normal_cdf(double x);

/// Kolmogorov-Smirnov distance between the empirical law of `samples`
/// (sorted in place) and the standard normal.
double ks_normal(std::vector<double>& samples);

/// KS distance between the empirical law of `samples` (sorted in place) and U[0,1].
double ks_uniform(std::vector<double>& samples);

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // unbiased

}  // namespace seqtx
