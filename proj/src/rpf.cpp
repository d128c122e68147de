#include "seqtx/rpf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "seqtx/errors.hpp"
#include "seqtx/normalized.hpp"

namespace seqtx {

namespace {

bool is_real_param(const ZParam& z) {
  return std::all_of(z.begin(), z.end(), [](const cplx& c) { return c.imag() == 0.0; });
}

cplx mean_value(const GridFunction& g) {
  cplx s{0.0, 0.0};
  for (const auto& v : g.values()) s += v;
  return s / static_cast<double>(g.size());
}

double rel_diff(std::span<const cplx> a, std::span<const cplx> b) {
  double d = 0.0, m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
    m = std::max(m, std::abs(a[i]));
  }
  return m > 0.0 ? d / m : d;
}

}  // namespace

RpfSolver::RpfSolver(const TransferContext& ctx, RpfConfig cfg) : ctx_(ctx), cfg_(cfg) {
  if (cfg_.depth < 1) throw ParameterError("rpf depth must be >= 1");
}

RpfSolver::Key RpfSolver::key(std::int64_t j, const ZParam& z) const {
  std::vector<double> flat;
  flat.reserve(2 * z.size());
  for (const auto& c : z) {
    flat.push_back(c.real());
    flat.push_back(c.imag());
  }
  return {ctx_.system().fiber_key(j), std::move(flat)};
}

GridFunction RpfSolver::raw_h(std::int64_t j, const ZParam& z) const {
  const SequentialSystem& sys = ctx_.system();
  const std::size_t p = sys.period();
  const auto depth = static_cast<std::int64_t>(cfg_.depth);
  const std::int64_t target = sys.fiber_key(j);
  GridFunction g = GridFunction::constant(ctx_.grid(), j - depth, 1.0);
  std::map<std::int64_t, std::vector<cplx>> last;  // previous iterate per fiber class
  bool converged = false;
  for (std::int64_t k = j - depth; k < j; ++k) {
    g = ctx_.apply(k, z, g);
    const cplx m = mean_value(g);
    if (std::abs(m) == 0.0) throw NumericError("rpf: iterate of h vanished");
    g /= m;
    const std::int64_t fk = sys.fiber_key(k + 1);
    if (p > 0 && !converged) {
      auto it = last.find(fk);
      if (it != last.end() && rel_diff(g.values(), it->second) < cfg_.early_exit) converged = true;
      last[fk].assign(g.values().begin(), g.values().end());
    }
    if (converged && fk == target) break;
  }
  g.set_fiber(j);
  return g;
}

std::vector<cplx> RpfSolver::raw_nu(std::int64_t j, const ZParam& z) const {
  const SequentialSystem& sys = ctx_.system();
  const std::size_t p = sys.period();
  const auto depth = static_cast<std::int64_t>(cfg_.depth);
  const Grid& grid = ctx_.grid();
  const std::int64_t target = sys.fiber_key(j);
  std::vector<cplx> w(grid.nodes());
  for (std::size_t i = 0; i < grid.nodes(); ++i) w[i] = grid.trapezoid_weight(i);
  std::map<std::int64_t, std::vector<cplx>> last;
  bool converged = false;
  for (std::int64_t k = j + depth - 1; k >= j; --k) {
    w = ctx_.op(k, z).apply_adjoint(w);
    cplx total{0.0, 0.0};
    for (const auto& v : w) total += v;
    if (std::abs(total) == 0.0) throw NumericError("rpf: iterate of nu vanished");
    for (auto& v : w) v /= total;
    const std::int64_t fk = sys.fiber_key(k);
    if (p > 0 && !converged) {
      auto it = last.find(fk);
      if (it != last.end() && rel_diff(w, it->second) < cfg_.early_exit) converged = true;
      last[fk] = w;
    }
    if (converged && fk == target) break;
  }
  return w;
}

std::vector<cplx> RpfSolver::nu(std::int64_t j, const ZParam& z) const {
  const Key k = key(j, z);
  {
    std::scoped_lock lock(mutex_);
    if (auto it = nu_cache_.find(k); it != nu_cache_.end()) return it->second;
  }
  auto w = raw_nu(j, z);
  std::scoped_lock lock(mutex_);
  return nu_cache_.emplace(k, std::move(w)).first->second;
}

GridFunction RpfSolver::h(std::int64_t j, const ZParam& z) const {
  const Key k = key(j, z);
  {
    std::scoped_lock lock(mutex_);
    if (auto it = h_cache_.find(k); it != h_cache_.end()) {
      GridFunction g = it->second;
      g.set_fiber(j);
      return g;
    }
  }
  GridFunction g = raw_h(j, z);
  const auto w = nu(j, z);
  const cplx norm = integrate(std::span<const cplx>(w), g);
  if (std::abs(norm) == 0.0) throw NumericError("rpf: nu(h) vanished");
  g /= norm;
  std::scoped_lock lock(mutex_);
  h_cache_.emplace(k, g);
  return g;
}

cplx RpfSolver::lambda(std::int64_t j, const ZParam& z) const {
  const Key k = key(j, z);
  {
    std::scoped_lock lock(mutex_);
    if (auto it = lambda_cache_.find(k); it != lambda_cache_.end()) return it->second;
  }
  const GridFunction hj = h(j, z);
  const auto w1 = nu(j + 1, z);
  const cplx lam = integrate(std::span<const cplx>(w1), ctx_.apply(j, z, hj));
  std::scoped_lock lock(mutex_);
  lambda_cache_.emplace(k, lam);
  return lam;
}

RpfTriplet RpfSolver::solve(std::int64_t j, const ZParam& z) const {
  RpfTriplet t;
  t.fiber = j;
  t.z = z;
  t.h = h(j, z);
  t.nu = nu(j, z);
  t.lambda = lambda(j, z);

  const TransferOperator L = ctx_.op(j, z);
  const GridFunction h1 = h(j + 1, z);
  const GridFunction Lh = L.apply(t.h);
  double num = 0.0;
  for (std::size_t i = 0; i < Lh.size(); ++i)
    num = std::max(num, std::abs(Lh[i] - t.lambda * h1[i]));
  t.eigen_residual = num / h1.sup_norm();

  const auto nu1 = nu(j + 1, z);
  const auto Lnu = L.apply_adjoint(nu1);
  double l1 = 0.0;
  for (std::size_t i = 0; i < Lnu.size(); ++i) l1 += std::abs(Lnu[i] - t.lambda * t.nu[i]);
  t.adjoint_residual = l1;

  cplx total{0.0, 0.0};
  for (const auto& v : t.nu) total += v;
  t.normalization_error = std::max(std::abs(total - 1.0),
                                   std::abs(integrate(std::span<const cplx>(t.nu), t.h) - 1.0));

  if (is_real_param(z)) {
    const double hmin = t.h.inf_real();
    if (!(hmin > cfg_.positivity_floor)) {
      std::ostringstream msg;
      msg << "rpf: h lost positivity at fiber " << j << " (min " << hmin << ")";
      throw NumericError(msg.str());
    }
  }
  if (!(t.eigen_residual <= cfg_.residual_tolerance)) {
    std::ostringstream msg;
    msg << "rpf: eigen residual " << t.eigen_residual << " at fiber " << j << " exceeds "
        << cfg_.residual_tolerance << " at depth " << cfg_.depth << "; increase the depth";
    throw NumericError(msg.str());
  }
  return t;
}

GibbsFamily::GibbsFamily(const RpfSolver& solver)
    : solver_(solver), zero_(zero_param(solver.context().dim())) {}

const std::vector<double>& GibbsFamily::mu(std::int64_t j) const {
  const std::int64_t key = context().system().fiber_key(j);
  {
    std::scoped_lock lock(mutex_);
    if (auto it = mu_cache_.find(key); it != mu_cache_.end()) return it->second;
  }
  const GridFunction hj = solver_.h(j, zero_);
  const auto w = solver_.nu(j, zero_);
  std::vector<double> m(hj.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = hj[i].real() * w[i].real();
    if (m[i] < 0.0) {
      if (m[i] < -1e-12) throw NumericError("gibbs: negative mass in mu");
      m[i] = 0.0;
    }
    total += m[i];
  }
  for (auto& v : m) v /= total;
  std::scoped_lock lock(mutex_);
  return mu_cache_.emplace(key, std::move(m)).first->second;
}

GridFunction GibbsFamily::h(std::int64_t j) const { return solver_.h(j, zero_); }

std::vector<double> GibbsFamily::nu(std::int64_t j) const {
  const auto w = solver_.nu(j, zero_);
  std::vector<double> r(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) r[i] = w[i].real();
  return r;
}

double GibbsFamily::lambda(std::int64_t j) const { return solver_.lambda(j, zero_).real(); }

double GibbsFamily::expect(std::int64_t j, const GridFunction& g) const {
  return integrate(std::span<const double>(mu(j)), g).real();
}

std::vector<double> GibbsFamily::pushforward(std::int64_t j) const {
  const Grid& grid = context().grid();
  const MapModel& T = context().system().map(j);
  const auto& m = mu(j);
  constexpr int kSub = 8;
  std::vector<double> out(grid.nodes(), 0.0);
  const double h = grid.spacing();
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const double lo = std::max(0.0, grid.node(i) - 0.5 * h);
    const double hi = std::min(1.0, grid.node(i) + 0.5 * h);
    const double step = (hi - lo) / kSub;
    for (int s = 0; s < kSub; ++s) {
      const double y = T(lo + (s + 0.5) * step);
      std::size_t c;
      double f;
      grid.locate(y, c, f);
      out[c] += m[i] / kSub * (1.0 - f);
      out[c + 1] += m[i] / kSub * f;
    }
  }
  return out;
}

EquivarianceReport equivariance_residual(const GibbsFamily& family, std::int64_t j) {
  const auto pushed = family.pushforward(j);
  const auto& next = family.mu(j + 1);
  EquivarianceReport r;
  double cdf = 0.0;
  for (std::size_t i = 0; i < pushed.size(); ++i) {
    const double d = pushed[i] - next[i];
    cdf += d;
    r.kolmogorov = std::max(r.kolmogorov, std::abs(cdf));
    r.total_variation += std::abs(d);
  }
  // Weak form on the point masses moved to T_j(x_i): no deposit error.
  const Grid& grid = family.context().grid();
  const MapModel& T = family.context().system().map(j);
  const auto& here = family.mu(j);
  for (int k = 1; k <= 8; ++k) {
    const double w = 2.0 * std::numbers::pi * k;
    double acc = 0.0;
    for (std::size_t i = 0; i < here.size(); ++i)
      acc += here[i] * std::cos(w * T(grid.node(i))) - next[i] * std::cos(w * grid.node(i));
    r.weak = std::max(r.weak, std::abs(acc));
  }
  return r;
}

double interval_measure(const Grid& grid, std::span<const double> weights, double a, double b) {
  if (b < a) std::swap(a, b);
  const double h = grid.spacing();
  double total = 0.0;
  const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(a / h - 1.0)));
  const auto last = std::min(grid.cells(), static_cast<std::size_t>(std::ceil(b / h + 1.0)));
  for (std::size_t i = first; i <= last; ++i) {
    const double lo = std::max(0.0, grid.node(i) - 0.5 * h);
    const double hi = std::min(1.0, grid.node(i) + 0.5 * h);
    const double overlap = std::min(hi, b) - std::max(lo, a);
    if (overlap > 0.0) total += weights[i] * overlap / (hi - lo);
  }
  return total;
}

ConformalReport check_conformal(const GibbsFamily& family, std::int64_t j,
                                std::span<const Interval> test_sets) {
  const auto& ctx = family.context();
  const Grid& grid = ctx.grid();
  const Fiber& fb = ctx.system().fiber(j);
  const MapModel& T = *fb.map;
  const auto nu0 = family.nu(j);
  const auto nu1 = family.nu(j + 1);
  std::vector<double> tilted(nu0.size());
  for (std::size_t i = 0; i < nu0.size(); ++i)
    tilted[i] = nu0[i] * std::exp(-fb.potential(grid.node(i)));
  const double lam = family.lambda(j);

  ConformalReport rep;
  for (const auto& A : test_sets) {
    const int k = T.branch_of(0.5 * (A.a + A.b));
    const Branch& br = T.branches[static_cast<std::size_t>(k)];
    if (A.a < br.lo - 1e-15 || A.b > br.hi + 1e-15 || A.b <= A.a) {
      std::ostringstream msg;
      msg << "conformal: test set [" << A.a << ", " << A.b
          << "] is not inside a single branch domain";
      throw ParameterError(msg.str());
    }
    const double lhs = interval_measure(grid, nu1, br.forward(A.a), br.forward(A.b));
    const double rhs = lam * interval_measure(grid, tilted, A.a, A.b);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.max_relative_residual =
        std::max(rep.max_relative_residual, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300));
  }
  return rep;
}

std::vector<Interval> random_branch_intervals(const MapModel& map, std::size_t count,
                                              std::uint64_t seed, double min_fraction) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Interval> out;
  for (std::size_t s = 0; s < count; ++s) {
    const auto k = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(map.branch_count()));
    const Branch& b = map.branches[k];
    const double width = b.hi - b.lo;
    const double min_len = min_fraction * width;
    const double a = b.lo + unif(rng) * (width - min_len);
    const double len = min_len + unif(rng) * (b.hi - a - min_len);
    out.push_back({a, a + len});
  }
  return out;
}

DecayFit check_exp_convergence(const RpfSolver& solver, std::int64_t j, const ZParam& z,
                               const GridFunction& g, std::size_t n_max) {
  const auto& ctx = solver.context();
  const double alpha = ctx.system().alpha();
  const auto w = solver.nu(j, z);
  const cplx nu_g = integrate(std::span<const cplx>(w), g);
  GridFunction G = g;
  G.set_fiber(j);
  DecayFit out;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const auto jn = j + static_cast<std::int64_t>(n);
    GridFunction resid = G - solver.h(jn, z) * nu_g;
    out.sequence.push_back(holder_norm(resid, alpha));
    if (n < n_max) {
      G = ctx.apply(jn, z, G);
      G /= solver.lambda(jn, z);
    }
  }
  std::vector<double> ns, rs;
  for (std::size_t n = 1; n <= n_max; ++n) {
    ns.push_back(static_cast<double>(n));
    rs.push_back(out.sequence[n]);
  }
  const double floor = 1e-13 * std::max(1.0, holder_norm(g, alpha));
  out.fit = fit_exponential(ns, rs, floor);
  if (out.fit.points > 0) out.fit.A /= std::max(holder_norm(g, alpha), 1e-300);
  return out;
}

DecayFit check_decay_correlations(const GibbsFamily& family, std::int64_t j, const ScalarFn& g,
                                  const ScalarFn& f, std::size_t n_max) {
  const auto& ctx = family.context();
  const NormalizedTransfer tilde(family);
  const ZParam zero = zero_param(ctx.dim());
  auto real_fn = [](const ScalarFn& fn) { return [&fn](double x) { return cplx(fn(x), 0.0); }; };
  const GridFunction G = ctx.sample(j, real_fn(g));
  const double mean_g = family.expect(j, G);
  GridFunction W = G;
  DecayFit out;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const auto jn = j + static_cast<std::int64_t>(n);
    const GridFunction F = ctx.sample(jn, real_fn(f));
    const double joint = family.expect(jn, F.pointwise(W));
    out.sequence.push_back(std::abs(joint - mean_g * family.expect(jn, F)));
    if (n < n_max) W = tilde.apply(jn, zero, W);
  }
  std::vector<double> ns, rs;
  for (std::size_t n = 1; n <= n_max; ++n) {
    ns.push_back(static_cast<double>(n));
    rs.push_back(out.sequence[n]);
  }
  out.fit = fit_exponential(ns, rs, 1e-14);
  return out;
}

ZParam imaginary_param(std::span<const double> t) {
  ZParam z;
  for (double v : t) z.emplace_back(0.0, v);
  return z;
}

NormalizedTransfer::NormalizedTransfer(const GibbsFamily& family) : family_(family) {}

std::shared_ptr<const NormalizedTransfer::Prepared> NormalizedTransfer::prepared(
    std::int64_t j) const {
  const std::int64_t key = family_.context().system().fiber_key(j);
  {
    std::scoped_lock lock(mutex_);
    if (auto it = prepared_.find(key); it != prepared_.end()) return it->second;
  }
  auto p = std::make_shared<Prepared>();
  p->h = family_.h(j);
  const GridFunction h1 = family_.h(j + 1);
  const double floor = family_.solver().config().positivity_floor;
  if (!(p->h.inf_real() > floor) || !(h1.inf_real() > floor))
    throw NumericError("normalized transfer: h below the positivity floor");
  const double lam = family_.lambda(j);
  p->inv_next.resize(h1.size());
  for (std::size_t i = 0; i < h1.size(); ++i) p->inv_next[i] = 1.0 / (lam * h1[i].real());
  std::scoped_lock lock(mutex_);
  return prepared_.emplace(key, std::move(p)).first->second;
}

GridFunction NormalizedTransfer::apply(std::int64_t j, const ZParam& z,
                                       const GridFunction& g) const {
  const auto p = prepared(j);
  GridFunction gh = g.pointwise(p->h);
  gh.set_fiber(j);
  GridFunction out = family_.context().apply(j, z, gh);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= p->inv_next[i];
  return out;
}

GridFunction NormalizedTransfer::compose(std::int64_t j, std::size_t n, const ZParam& z,
                                         GridFunction g) const {
  for (std::size_t k = 0; k < n; ++k) g = apply(j + static_cast<std::int64_t>(k), z, g);
  return g;
}

LinearMap NormalizedTransfer::as_map(std::int64_t j, std::size_t n, const ZParam& z) const {
  return [this, j, n, z](const GridFunction& g) { return compose(j, n, z, g); };
}

}  // namespace seqtx
