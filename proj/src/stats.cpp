#include "seqtx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqtx/errors.hpp"

namespace seqtx {

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("fit_line: size mismatch");
  LineFit f;
  f.points = x.size();
  if (x.size() < 2) return f;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

ExpFit fit_exponential(std::span<const double> n, std::span<const double> r, double floor) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (r[i] > floor && std::isfinite(r[i])) {
      xs.push_back(n[i]);
      ys.push_back(std::log(r[i]));
    }
  }
  ExpFit e;
  const LineFit f = fit_line(xs, ys);
  e.points = f.points;
  e.A = std::exp(f.intercept);
  e.delta = std::exp(f.slope);
  e.r2 = f.r2;
  return e;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double ks_normal(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = normal_cdf(samples[i]);
    const double di = static_cast<double>(i);
    d = std::max({d, (di + 1.0) / n - F, F - di / n});
  }
  return d;
}

double ks_uniform(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double di = static_cast<double>(i);
    d = std::max({d, (di + 1.0) / n - samples[i], samples[i] - di / n});
  }
  return d;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace seqtx
