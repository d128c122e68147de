#include "seqtx/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "seqtx/errors.hpp"
#include "seqtx/parallel.hpp"

namespace seqtx {

namespace {

ZParam real_shift(int d, int a, double ha, int b = -1, double hb = 0.0) {
  ZParam z = zero_param(d);
  z[static_cast<std::size_t>(a)] += ha;
  if (b >= 0) z[static_cast<std::size_t>(b)] += hb;
  return z;
}

// Second derivative ∂_a∂_b of a real function at 0 by central differences.
template <class F>
double second_diff(F&& f, int d, int a, int b, double h) {
  if (a == b) {
    const double fp = f(real_shift(d, a, h)).real();
    const double fm = f(real_shift(d, a, -h)).real();
    const double f0 = f(zero_param(d)).real();
    return (fp - 2.0 * f0 + fm) / (h * h);
  }
  const double pp = f(real_shift(d, a, h, b, h)).real();
  const double pm = f(real_shift(d, a, h, b, -h)).real();
  const double mp = f(real_shift(d, a, -h, b, h)).real();
  const double mm = f(real_shift(d, a, -h, b, -h)).real();
  return (pp - pm - mp + mm) / (4.0 * h * h);
}

template <class F>
double first_diff(F&& f, int d, int a, double h) {
  return (f(real_shift(d, a, h)).real() - f(real_shift(d, a, -h)).real()) / (2.0 * h);
}

template <class F>
void differentiate(F&& f, int d, double step, std::vector<double>& grad,
                   std::vector<double>& hess, std::vector<double>* five_point) {
  grad.assign(static_cast<std::size_t>(d), 0.0);
  hess.assign(static_cast<std::size_t>(d * d), 0.0);
  for (int a = 0; a < d; ++a) {
    const double g1 = first_diff(f, d, a, step), g2 = first_diff(f, d, a, 0.5 * step);
    grad[static_cast<std::size_t>(a)] = (4.0 * g2 - g1) / 3.0;
    for (int b = a; b < d; ++b) {
      const double h1 = second_diff(f, d, a, b, step), h2 = second_diff(f, d, a, b, 0.5 * step);
      const double v = (4.0 * h2 - h1) / 3.0;
      hess[static_cast<std::size_t>(a * d + b)] = v;
      hess[static_cast<std::size_t>(b * d + a)] = v;
    }
  }
  if (five_point) {
    five_point->assign(static_cast<std::size_t>(d), 0.0);
    for (int a = 0; a < d; ++a) {
      const double f0 = f(zero_param(d)).real();
      const double p1 = f(real_shift(d, a, step)).real(), m1 = f(real_shift(d, a, -step)).real();
      const double p2 = f(real_shift(d, a, 2 * step)).real();
      const double m2 = f(real_shift(d, a, -2 * step)).real();
      (*five_point)[static_cast<std::size_t>(a)] =
          (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * step * step);
    }
  }
}

std::vector<double> centered_observables(const GibbsFamily& family, std::int64_t j,
                                         std::vector<GridFunction>& out) {
  const auto& ctx = family.context();
  std::vector<double> means;
  out.clear();
  for (int a = 0; a < ctx.dim(); ++a) {
    GridFunction u = ctx.observable(j, a);
    const double m = family.expect(j, u);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= m;
    out.push_back(std::move(u));
    means.push_back(m);
  }
  return means;
}

double real_expect(const std::vector<double>& mu, const GridFunction& a, const GridFunction& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu[i] * a[i].real() * b[i].real();
  return s;
}

}  // namespace

cplx fiber_pressure(const RpfSolver& solver, std::int64_t j, const ZParam& z) {
  const cplx ratio = solver.lambda(j, z) / solver.lambda(j, zero_param(static_cast<int>(z.size())));
  if (!(ratio.real() > 0.0)) {
    std::ostringstream msg;
    msg << "pressure: λ ratio " << ratio << " at fiber " << j
        << " crosses the branch cut; use a smaller stencil";
    throw NumericError(msg.str());
  }
  return std::log(ratio);
}

cplx block_pressure(const RpfSolver& solver, std::int64_t j, std::size_t n, const ZParam& z) {
  cplx s{0.0, 0.0};
  for (std::size_t k = 0; k < n; ++k) s += fiber_pressure(solver, j + static_cast<std::int64_t>(k), z);
  return s;
}

PressureBlock pressure_block(const RpfSolver& solver, std::int64_t j, std::size_t n,
                             std::span<const ZParam> stencil, double step) {
  PressureBlock b;
  b.j = j;
  b.n = n;
  for (const auto& z : stencil) {
    b.stencil.push_back(z);
    b.values.push_back(block_pressure(solver, j, n, z));
  }
  const int d = solver.context().dim();
  auto f = [&](const ZParam& z) { return block_pressure(solver, j, n, z); };
  differentiate(f, d, step, b.gradient, b.hessian, &b.hessian_5pt);
  return b;
}

std::vector<std::vector<double>> hessian_curve(const RpfSolver& solver, std::int64_t j,
                                               std::size_t n_max, double step) {
  const int d = solver.context().dim();
  std::vector<std::vector<double>> out;
  std::vector<double> acc(static_cast<std::size_t>(d * d), 0.0), grad, hess;
  out.push_back(acc);
  for (std::size_t k = 0; k < n_max; ++k) {
    const std::int64_t jk = j + static_cast<std::int64_t>(k);
    auto f = [&](const ZParam& z) { return fiber_pressure(solver, jk, z); };
    differentiate(f, d, step, grad, hess, nullptr);
    for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += hess[e];
    out.push_back(acc);
  }
  return out;
}

double CovarianceCurve::var(std::size_t n, std::span<const double> v) const {
  double s = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      s += cov[n][static_cast<std::size_t>(a * d + b)] * v[static_cast<std::size_t>(a)] *
           v[static_cast<std::size_t>(b)];
  return s;
}

CovarianceCurve covariance_curve(const GibbsFamily& family, std::int64_t j, std::size_t n_max) {
  const auto& ctx = family.context();
  const NormalizedTransfer tilde(family);
  const int d = ctx.dim();
  const ZParam zero = zero_param(d);
  CovarianceCurve c;
  c.d = d;
  std::vector<double> acc(static_cast<std::size_t>(d * d), 0.0);
  c.cov.push_back(acc);
  std::vector<GridFunction> W(static_cast<std::size_t>(d), GridFunction(ctx.grid(), j));
  std::vector<GridFunction> U;
  for (std::size_t l = 0; l < n_max; ++l) {
    const std::int64_t jl = j + static_cast<std::int64_t>(l);
    centered_observables(family, jl, U);
    const auto& mu = family.mu(jl);
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
        acc[ua * static_cast<std::size_t>(d) + ub] += real_expect(mu, U[ua], U[ub]) +
                                                      real_expect(mu, U[ua], W[ub]) +
                                                      real_expect(mu, W[ua], U[ub]);
      }
    }
    // Symmetrize away the roundoff asymmetry of the cross terms.
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) {
        auto& x = acc[static_cast<std::size_t>(a * d + b)];
        auto& y = acc[static_cast<std::size_t>(b * d + a)];
        x = y = 0.5 * (x + y);
      }
    c.cov.push_back(acc);
    if (l + 1 < n_max)
      for (int b = 0; b < d; ++b) {
        auto& w = W[static_cast<std::size_t>(b)];
        w.set_fiber(jl);
        w += U[static_cast<std::size_t>(b)];
        w = tilde.apply(jl, zero, w);
      }
  }
  return c;
}

CovHessianReport check_cov_hessian(const GibbsFamily& family, std::int64_t j,
                                   std::span<const std::size_t> n_list, double step) {
  std::size_t n_max = 0;
  for (auto n : n_list) n_max = std::max(n_max, n);
  const auto cov = covariance_curve(family, j, n_max);
  const auto hess = hessian_curve(family.solver(), j, n_max, step);
  const int d = cov.d;
  CovHessianReport r;
  for (auto n : n_list) {
    double tv = 0.0, th = 0.0, diff = 0.0;
    for (int a = 0; a < d; ++a) {
      tv += cov.cov[n][static_cast<std::size_t>(a * d + a)];
      th += hess[n][static_cast<std::size_t>(a * d + a)];
    }
    for (std::size_t e = 0; e < cov.cov[n].size(); ++e)
      diff = std::max(diff, std::abs(cov.cov[n][e] - hess[n][e]));
    r.n.push_back(n);
    r.variance.push_back(tv);
    r.hessian.push_back(th);
    r.difference.push_back(diff);
    r.max_difference = std::max(r.max_difference, diff);
  }
  return r;
}

NormDecayReport norm_decay_scan(const NormalizedTransfer& tilde, std::int64_t j,
                                std::span<const double> t_list, const NormDecayOptions& opt) {
  const auto& ctx = tilde.family().context();
  const int d = ctx.dim();
  const double alpha = ctx.system().alpha();
  std::vector<double> dir = opt.direction;
  if (dir.empty()) {
    dir.assign(static_cast<std::size_t>(d), 0.0);
    dir[0] = 1.0;
  }
  if (static_cast<int>(dir.size()) != d) throw ParameterError("norm decay: direction dimension");
  if (opt.n_stride == 0) throw ParameterError("norm decay: n_stride must be positive");
  std::vector<std::size_t> ns;
  for (std::size_t n = 0; n <= opt.n_max; n += opt.n_stride) ns.push_back(n);
  const auto trials = norm_trial_functions(ctx.grid(), j, opt.trials, opt.seed);

  NormDecayReport rep;
  for (double t : t_list) {
    std::vector<double> tv(dir.size());
    for (std::size_t a = 0; a < dir.size(); ++a) tv[a] = t * dir[a];
    const ZParam z = imaginary_param(tv);
    // ratios[trial][k] = ‖L̃^{n_k} g‖ / ‖g‖
    std::vector<std::vector<double>> ratios(trials.size(), std::vector<double>(ns.size(), 0.0));
    parallel_for(trials.size(), [&](std::size_t i) {
      GridFunction g = trials[i];
      const double g_norm = holder_norm(g, alpha);
      std::size_t n = 0;
      for (std::size_t k = 0; k < ns.size(); ++k) {
        for (; n < ns[k]; ++n) g = tilde.apply(j + static_cast<std::int64_t>(n), z, g);
        ratios[i][k] = holder_norm(g, alpha) / g_norm;
      }
    });
    NormDecayRow row;
    row.t = t;
    row.n = ns;
    row.norm.assign(ns.size(), 0.0);
    for (const auto& r : ratios)
      for (std::size_t k = 0; k < ns.size(); ++k) row.norm[k] = std::max(row.norm[k], r[k]);
    std::vector<double> x, y;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      if (!std::isfinite(row.norm[k]) || row.norm[k] > opt.divergence) row.bounded = false;
      if (ns[k] == 0) continue;
      x.push_back(static_cast<double>(ns[k]));
      y.push_back(std::log(row.norm[k]));
    }
    row.fit = fit_line(x, y);
    row.c = t != 0.0 ? -row.fit.slope / (t * t) : 0.0;
    for (double v : row.norm) rep.uniform_bound = std::max(rep.uniform_bound, v);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

double symmetric_norm(std::span<const double> m, int d) {
  Eigen::MatrixXd A(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) A(a, b) = m[static_cast<std::size_t>(a * d + b)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double symmetric_min_eigen(std::span<const double> m, int d) {
  Eigen::MatrixXd A(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) A(a, b) = m[static_cast<std::size_t>(a * d + b)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

VarianceGrowthReport variance_growth_check(const GibbsFamily& family,
                                           std::span<const std::int64_t> j_list, std::size_t n,
                                           std::span<const std::vector<double>> directions,
                                           double c_min) {
  if (n == 0) throw ParameterError("variance growth: n must be positive");
  VarianceGrowthReport r;
  r.min_ratio = std::numeric_limits<double>::infinity();
  r.min_eigen_ratio = std::numeric_limits<double>::infinity();
  const double nn = static_cast<double>(n);
  for (auto j : j_list) {
    const auto curve = covariance_curve(family, j, n);
    for (const auto& v : directions) {
      if (static_cast<int>(v.size()) != curve.d)
        throw ParameterError("variance growth: direction dimension");
      double v2 = 0.0;
      for (double x : v) v2 += x * x;
      const double ratio = curve.var(n, v) / (nn * v2);
      if (ratio < r.min_ratio) {
        r.min_ratio = ratio;
        r.worst_j = j;
        r.worst_direction = v;
      }
    }
    r.min_eigen_ratio = std::min(r.min_eigen_ratio, symmetric_min_eigen(curve.cov[n], curve.d) / nn);
  }
  r.pass = r.min_ratio >= c_min && r.min_eigen_ratio >= c_min;
  return r;
}

StabilityReport stability_scan(const GibbsFamily& base, const GibbsFamily& pert,
                               const StabilityOptions& opt) {
  const auto& c0 = base.context();
  const auto& c1 = pert.context();
  if (!(c0.grid() == c1.grid()) || c0.dim() != c1.dim())
    throw ParameterError("stability scan: systems must share grid and observable dimension");
  const int d = c0.dim();
  const double alpha = c0.system().alpha();
  std::vector<ZParam> stencil{zero_param(d)};
  for (int a = 0; a < d; ++a)
    for (cplx s : {cplx(opt.r0, 0), cplx(-opt.r0, 0), cplx(0, opt.r0), cplx(0, -opt.r0)}) {
      ZParam z = zero_param(d);
      z[static_cast<std::size_t>(a)] = s;
      stencil.push_back(z);
    }
  StabilityReport r;
  for (std::size_t jj = 0; jj < opt.fibers; ++jj) {
    const auto j = static_cast<std::int64_t>(jj);
    for (const auto& z : stencil) {
      const TransferOperator A = c0.op(j, z), B = c1.op(j, z);
      LinearMap diff = [&](const GridFunction& g) { return A.apply(g) - B.apply(g); };
      r.eps_hat = std::max(r.eps_hat, op_norm_estimate(diff, c0.grid(), j, alpha, opt.trials,
                                                       derive_seed(opt.seed, jj)));
    }
  }
  const auto cov0 = covariance_curve(base, 0, opt.n_max);
  const auto cov1 = covariance_curve(pert, 0, opt.n_max);
  for (std::size_t n = 1; n <= opt.n_max; ++n) {
    std::vector<double> dm(cov0.cov[n].size());
    for (std::size_t e = 0; e < dm.size(); ++e) dm[e] = cov0.cov[n][e] - cov1.cov[n][e];
    const double ratio = symmetric_norm(dm, d) / static_cast<double>(n);
    r.ratio.push_back(ratio);
    r.sup_ratio = std::max(r.sup_ratio, ratio);
  }
  if (opt.delta0 > 0.0) r.within_delta = r.sup_ratio <= opt.delta0;
  return r;
}

}  // namespace seqtx
