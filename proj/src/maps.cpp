#include "seqtx/maps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <random>
#include <sstream>

#include "seqtx/errors.hpp"

namespace seqtx {

double MapModel::operator()(double x) const {
  const Branch& b = branches[static_cast<std::size_t>(branch_of(x))];
  double y = b.forward(x);
  if (space == SpaceKind::Circle && y >= 1.0) y -= 1.0;
  return std::clamp(y, 0.0, 1.0);
}

int MapModel::branch_of(double x) const {
  const int d = branch_count();
  for (int k = 0; k < d; ++k) {
    const Branch& b = branches[static_cast<std::size_t>(k)];
    if (space == SpaceKind::Circle) {
      if (x < b.hi) return k;
    } else if (x <= b.hi) {
      return k;
    }
  }
  return d - 1;
}

std::vector<double> MapModel::preimages(double x) const {
  std::vector<double> out;
  out.reserve(branches.size());
  for (const auto& b : branches) out.push_back(b.inverse(x));
  return out;
}

double invert_monotone(const std::function<double(double)>& f,
                       const std::function<double(double)>& df, double x, double lo,
                       double hi, double tol) {
  double a = lo, b = hi;
  double fa = f(a) - x, fb = f(b) - x;
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (fa > 0.0 || fb < 0.0) {
    std::ostringstream msg;
    msg << "root solve: target x=" << x << " outside branch image";
    throw NumericError(msg.str());
  }
  double y = a + (b - a) * (x - (fa + x)) / ((fb + x) - (fa + x));
  for (int it = 0; it < 200; ++it) {
    const double fy = f(y) - x;
    if (fy == 0.0) return y;
    if (fy < 0.0) a = y; else b = y;
    const double d = df(y);
    double next = (d > 0.0) ? y - fy / d : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - y) <= tol || (b - a) <= tol) return next;
    y = next;
  }
  std::ostringstream msg;
  msg << "root solve did not converge at x=" << x;
  throw NumericError(msg.str());
}

MapModel make_mp_map(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("MP map: beta must lie in (0,1)");
  const double c = std::pow(2.0, beta);
  auto f = [beta, c](double x) { return x * (1.0 + c * std::pow(x, beta)); };
  auto df = [beta, c](double x) { return 1.0 + (1.0 + beta) * c * std::pow(x, beta); };

  MapModel m;
  m.name = "mp(beta=" + std::to_string(beta) + ")";
  m.space = SpaceKind::Interval;
  Branch left;
  left.lo = 0.0;
  left.hi = 0.5;
  left.forward = f;
  left.inverse = [f, df](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 0.5;
    return invert_monotone(f, df, x, 0.0, 0.5);
  };
  left.inverse_lipschitz = 1.0;
  left.contracting = true;

  Branch right;
  right.lo = 0.5;
  right.hi = 1.0;
  right.forward = [](double x) { return 2.0 * x - 1.0; };
  right.inverse = [](double x) { return 0.5 * (x + 1.0); };
  right.inverse_lipschitz = 0.5;

  m.branches = {left, right};
  m.contracting_count = 1;
  m.L = 1.0;
  m.sigma = 2.0;
  return m;
}

MapModel make_linear_expanding(int m) {
  if (m < 2) throw ParameterError("linear expanding map needs m >= 2");
  MapModel map;
  map.name = "linear(m=" + std::to_string(m) + ")";
  map.space = SpaceKind::Circle;
  const double md = m;
  for (int k = 0; k < m; ++k) {
    Branch b;
    b.lo = k / md;
    b.hi = (k + 1) / md;
    b.forward = [md, k](double x) { return md * x - k; };
    b.inverse = [md, k](double x) { return (x + k) / md; };
    b.inverse_lipschitz = 1.0 / md;
    map.branches.push_back(std::move(b));
  }
  map.contracting_count = 0;
  map.L = 1.0;
  map.sigma = md;
  return map;
}

MapModel make_perturbed_expanding(int m, const BumpSpec& bump) {
  MapModel map = make_linear_expanding(m);
  if (bump.amplitude == 0.0) return map;
  if (bump.branch < 0 || bump.branch >= m)
    throw ConstructionError("bump: branch index out of range");
  if (!(bump.width > 0.0) || bump.start < 0.0 || bump.start + bump.width > 1.0)
    throw ConstructionError("bump: window must lie inside the branch");
  if (std::abs(bump.amplitude) >= 1.0)
    throw ConstructionError("bump: perturbed branch is not monotone onto");

  const double md = m;
  const int k = bump.branch;
  const double c = bump.start, w = bump.width, A = bump.amplitude;
  const double two_pi = 2.0 * std::numbers::pi;
  auto local = [c, w, A, two_pi](double s) {
    if (s <= c || s >= c + w) return s;
    return s - A * w / two_pi * std::sin(two_pi * (s - c) / w);
  };
  auto local_slope = [c, w, A, two_pi](double s) {
    if (s <= c || s >= c + w) return 1.0;
    return 1.0 - A * std::cos(two_pi * (s - c) / w);
  };
  auto f = [local, md, k](double x) { return local(md * x - k); };
  auto df = [local_slope, md, k](double x) { return md * local_slope(md * x - k); };

  Branch& b = map.branches[static_cast<std::size_t>(k)];
  const double lo = b.lo, hi = b.hi;
  b.forward = f;
  b.inverse = [f, df, lo, hi](double x) {
    if (x <= 0.0) return lo;
    if (x >= 1.0) return hi;
    return invert_monotone(f, df, x, lo, hi);
  };
  const double min_slope = md * (1.0 - std::abs(A));
  b.inverse_lipschitz = 1.0 / min_slope;
  b.contracting = true;
  map.contracting_count = 1;
  map.L = std::max(1.0, 1.0 / min_slope);
  map.name = "perturbed(m=" + std::to_string(m) + ",A=" + std::to_string(A) + ")";
  return map;
}

PairingReport verify_pairing(const MapModel& map, std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw ParameterError("verify_pairing: samples must be >= 1");
  const int d = map.branch_count();
  PairingReport rep;
  rep.d = d;
  rep.q = map.contracting_count;
  rep.branch_max_ratio.assign(static_cast<std::size_t>(d), 0.0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t s = 0; s < samples; ++s) {
    // Three pair shapes: global pairs, near-diagonal pairs, and pairs close to 0
    // where neutral fixed points put the extremal ratio.
    double x, xp;
    switch (s % 3) {
      case 0:
        x = unif(rng);
        xp = unif(rng);
        break;
      case 1: {
        x = unif(rng);
        const double delta = std::pow(10.0, -4.0 * unif(rng));
        xp = std::clamp(x + (unif(rng) < 0.5 ? -delta : delta), 0.0, 1.0);
        break;
      }
      default:
        x = std::pow(10.0, -6.0 * unif(rng));
        xp = x * (1.0 + std::pow(10.0, -3.0 * unif(rng)));
        xp = std::min(xp, 1.0);
        break;
    }
    if (std::abs(x - xp) < 1e-12) continue;
    const auto pa = map.preimages(x);
    const auto pb = map.preimages(xp);
    if (pa.size() != pb.size())
      throw NumericError("verify_pairing: preimage counts differ between x and x'");
    for (int k = 0; k < d; ++k) {
      // Preimages carry a few ulps of roundoff; discount it so short pairs do
      // not report spurious excess over the declared bound.
      const double dy = std::abs(pa[static_cast<std::size_t>(k)] - pb[static_cast<std::size_t>(k)]);
      const double r = std::max(0.0, dy - 8.0 * std::numeric_limits<double>::epsilon()) /
                       std::abs(x - xp);
      auto& best = rep.branch_max_ratio[static_cast<std::size_t>(k)];
      best = std::max(best, r);
    }
  }
  double bad = 0.0, good = 0.0;
  for (int k = 0; k < d; ++k) {
    const auto& b = map.branches[static_cast<std::size_t>(k)];
    const double r = rep.branch_max_ratio[static_cast<std::size_t>(k)];
    const double bound = b.contracting ? map.L : 1.0 / map.sigma;
    if (r > bound + 1e-8) rep.consistent = false;
    if (b.contracting) bad = std::max(bad, r); else good = std::max(good, r);
  }
  rep.L_hat = bad;
  rep.sigma_hat = good > 0.0 ? 1.0 / good : 0.0;
  return rep;
}

}  // namespace seqtx
