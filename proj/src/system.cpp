#include "seqtx/system.hpp"

#include <algorithm>
#include <cmath>

#include "seqtx/errors.hpp"
#include "seqtx/grid.hpp"

namespace seqtx {

Observable Observable::zero(int d) {
  Observable u;
  for (int k = 0; k < d; ++k) u.components.emplace_back([](double) { return 0.0; });
  return u;
}

Observable Observable::scalar(ScalarFn f) {
  Observable u;
  u.components.push_back(std::move(f));
  return u;
}

SequentialSystem::SequentialSystem(Generator gen, std::size_t period, std::size_t horizon,
                                   double alpha)
    : gen_(std::move(gen)), period_(period), horizon_(horizon), alpha_(alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in (0,1]");
  if (horizon_ < 1) throw ParameterError("horizon must be >= 1");
}

SequentialSystem::SequentialSystem(const SequentialSystem& other)
    : gen_(other.gen_),
      period_(other.period_),
      horizon_(other.horizon_),
      alpha_(other.alpha_) {}

SequentialSystem& SequentialSystem::operator=(const SequentialSystem& other) {
  if (this != &other) {
    std::scoped_lock lock(mutex_);
    gen_ = other.gen_;
    period_ = other.period_;
    horizon_ = other.horizon_;
    alpha_ = other.alpha_;
    cache_.clear();
  }
  return *this;
}

SequentialSystem SequentialSystem::periodic(std::vector<Fiber> fibers, double alpha) {
  if (fibers.empty()) throw ParameterError("periodic system needs at least one fiber");
  const std::size_t p = fibers.size();
  auto shared = std::make_shared<const std::vector<Fiber>>(std::move(fibers));
  Generator gen = [shared, p](std::int64_t j) {
    const auto pp = static_cast<std::int64_t>(p);
    return (*shared)[static_cast<std::size_t>(((j % pp) + pp) % pp)];
  };
  return SequentialSystem(std::move(gen), p, p, alpha);
}

SequentialSystem SequentialSystem::driven(Generator gen, std::size_t horizon, double alpha) {
  return SequentialSystem(std::move(gen), 0, horizon, alpha);
}

std::int64_t SequentialSystem::fiber_key(std::int64_t j) const {
  if (period_ == 0) return j;
  const auto p = static_cast<std::int64_t>(period_);
  return ((j % p) + p) % p;
}

const Fiber& SequentialSystem::fiber(std::int64_t j) const {
  const std::int64_t key = fiber_key(j);
  std::scoped_lock lock(mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, gen_(key)).first;
  return it->second;
}

int SequentialSystem::observable_dim() const { return fiber(0).observable.dim(); }

SequentialSystem SequentialSystem::with_observable(
    std::function<Observable(std::int64_t, const Fiber&)> f) const {
  Generator base = gen_;
  Generator gen = [base, f](std::int64_t j) {
    Fiber fb = base(j);
    fb.observable = f(j, fb);
    return fb;
  };
  return SequentialSystem(std::move(gen), period_, horizon_, alpha_);
}

SequentialSystem SequentialSystem::with_potential(
    std::function<ScalarFn(std::int64_t, const Fiber&)> f) const {
  Generator base = gen_;
  Generator gen = [base, f](std::int64_t j) {
    Fiber fb = base(j);
    fb.potential = f(j, fb);
    fb.epsilon.reset();
    return fb;
  };
  return SequentialSystem(std::move(gen), period_, horizon_, alpha_);
}

SequentialSystem SequentialSystem::with_alpha(double alpha) const {
  return SequentialSystem(gen_, period_, horizon_, alpha);
}

SequentialSystem make_homogeneous(const MapModel& map, ScalarFn potential, Observable u,
                                  double alpha) {
  Fiber f;
  f.map = std::make_shared<const MapModel>(map);
  f.potential = potential ? std::move(potential) : ScalarFn([](double) { return 0.0; });
  f.observable = u.dim() > 0 ? std::move(u) : Observable::zero();
  return SequentialSystem::periodic({std::move(f)}, alpha);
}

double driven_beta(double theta_angle, const std::function<double(double)>& beta_map,
                   std::int64_t j, double omega0) {
  // Reduce j·θ with fmod to keep the phase accurate for large |j|.
  double phase = std::fmod(omega0 + static_cast<double>(j) * theta_angle, 1.0);
  if (phase < 0.0) phase += 1.0;
  return beta_map(phase);
}

SequentialSystem make_driven_mp_system(double theta_angle, std::function<double(double)> beta_map,
                                       std::size_t horizon, ScalarFn potential, Observable u,
                                       double omega0) {
  if (!beta_map) throw ParameterError("driven MP system: beta_map is required");
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i <= 4096; ++i) {
    const double b = beta_map(i / 4096.0);
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  if (!(lo > 0.0 && hi < 1.0))
    throw ParameterError("driven MP system: beta range must stay strictly inside (0,1)");
  if (!potential) potential = [](double) { return 0.0; };
  if (u.dim() == 0) u = Observable::scalar([](double x) { return x; });
  SequentialSystem::Generator gen = [=](std::int64_t j) {
    Fiber f;
    f.map = std::make_shared<const MapModel>(
        make_mp_map(driven_beta(theta_angle, beta_map, j, omega0)));
    f.potential = potential;
    f.observable = u;
    return f;
  };
  return SequentialSystem::driven(std::move(gen), horizon, 1.0);
}

FiberBounds fiber_bounds(const SequentialSystem& sys, std::int64_t j, std::size_t cells) {
  const Fiber& f = sys.fiber(j);
  const Grid grid(cells);
  auto phi = GridFunction::sample(grid, j, [&](double x) { return cplx(f.potential(x), 0.0); });
  FiberBounds b;
  b.oscillation = phi.sup_real() - phi.inf_real();
  b.potential_sup = phi.sup_norm();
  b.potential_seminorm = holder_seminorm(phi, sys.alpha());
  if (f.epsilon) {
    if (*f.epsilon + 1e-12 < b.oscillation)
      throw ParameterError("declared epsilon does not dominate the measured oscillation");
    b.epsilon = *f.epsilon;
  } else {
    b.epsilon = b.oscillation;
  }
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    double mass = 0.0;
    for (double y : f.map->preimages(grid.node(i))) mass += std::exp(f.potential(y));
    b.preimage_mass_sup = std::max(b.preimage_mass_sup, mass);
    for (int k = 0; k < f.observable.dim(); ++k)
      b.observable_sup = std::max(b.observable_sup, std::abs(f.observable(k, grid.node(i))));
  }
  return b;
}

double contraction_factor(double epsilon, int d, int q, double L, double sigma, double alpha) {
  return std::exp(epsilon) *
         (q * std::pow(L, alpha) + (d - q) * std::pow(sigma, -alpha)) / static_cast<double>(d);
}

SReport compute_s(const SequentialSystem& sys) {
  SReport rep;
  const auto n = static_cast<std::int64_t>(sys.horizon());
  for (std::int64_t j = 0; j < n; ++j) {
    const MapModel& m = sys.map(j);
    const double eps = fiber_bounds(sys, j, 1024).epsilon;
    const double sj =
        contraction_factor(eps, m.branch_count(), m.contracting_count, m.L, m.sigma, sys.alpha());
    rep.per_fiber.push_back(sj);
    rep.s = std::max(rep.s, sj);
  }
  rep.below_one = rep.s < 1.0;
  return rep;
}

}  // namespace seqtx
