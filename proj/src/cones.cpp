#include "seqtx/cones.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "seqtx/errors.hpp"
#include "seqtx/parallel.hpp"

namespace seqtx {

namespace {

GridFunction real_part_of(const GridFunction& g) {
  GridFunction r(g.grid(), g.fiber());
  for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[i].real();
  return r;
}

GridFunction imag_part_of(const GridFunction& g) {
  GridFunction r(g.grid(), g.fiber());
  for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[i].imag();
  return r;
}

}  // namespace

ConeParams make_cone_params(const SequentialSystem& sys, double delta_slack, double kappa) {
  if (!(delta_slack > 0.0)) throw ParameterError("cone: delta_slack must be positive");
  ConeParams p;
  p.alpha = sys.alpha();
  p.delta_slack = delta_slack;
  const SReport s = compute_s(sys);
  p.zeta = s.s * (1.0 + delta_slack);
  if (!(p.zeta < 1.0)) {
    std::ostringstream msg;
    msg << "cone: zeta = s(1+delta) = " << p.zeta << " is not below 1";
    throw ParameterError(msg.str());
  }
  double vphi = 0.0;
  for (std::size_t j = 0; j < sys.horizon(); ++j)
    vphi = std::max(vphi, fiber_bounds(sys, static_cast<std::int64_t>(j), 1024).potential_seminorm);
  p.kappa = kappa > 0.0 ? kappa : std::max(1.0, 10.0 * vphi / std::log1p(delta_slack));
  if (!(vphi < p.kappa * delta_slack)) {
    std::ostringstream msg;
    msg << "cone: kappa = " << p.kappa << " too small, need sup v(phi) = " << vphi
        << " < kappa * delta";
    throw ParameterError(msg.str());
  }
  return p;
}

Membership cone_member(const GridFunction& g, const ConeParams& p) {
  if (!g.is_real(1e-12 * std::max(1.0, g.sup_norm())))
    throw ParameterError("cone_member: g must be real-valued");
  const double inf = g.inf_real();
  const double v = holder_seminorm(g, p.alpha);
  Membership m;
  m.margin = p.kappa * inf - v;
  m.member = inf > 0.0 && m.margin >= -1e-12 * std::max(1.0, p.kappa * inf);
  return m;
}

std::vector<GridFunction> sample_cone(const ConeParams& p, const Grid& grid, std::int64_t fiber,
                                      std::size_t count, std::uint64_t seed, double amplitude) {
  std::vector<GridFunction> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double target = 0.9 * p.kappa;
  for (std::size_t s = 0; s < count; ++s) {
    const double c = 0.5 + 1.5 * unif(rng);
    const int terms = 1 + static_cast<int>(rng() % 4);
    std::vector<double> kind, centre, width, amp;
    for (int k = 0; k < terms; ++k) {
      kind.push_back(unif(rng) < 0.25 ? 1.0 : 0.0);
      centre.push_back(unif(rng));
      width.push_back(0.02 + 0.48 * unif(rng));
      amp.push_back(2.0 * unif(rng) - 1.0);
    }
    GridFunction shape = GridFunction::sample(grid, fiber, [&](double x) {
      double v = 0.0;
      for (int k = 0; k < terms; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (kind[kk] > 0.5) {
          v += amp[kk] * x;
        } else {
          const double z = (x - centre[kk]) / width[kk];
          v += amp[kk] * std::exp(-z * z);
        }
      }
      return cplx(v, 0.0);
    });
    const double vp = holder_seminorm(shape, p.alpha);
    const double lo = shape.inf_real();
    // Largest s with s·v(p) ≤ 0.9κ(1 + s·inf p), capped to keep 1 + s·p bounded.
    double s_max = 10.0 / std::max(shape.sup_norm(), 1e-300);
    if (vp - target * lo > 0.0) s_max = std::min(s_max, target / (vp - target * lo));
    double scale = amplitude * unif(rng) * s_max;
    GridFunction g = GridFunction::constant(grid, fiber, 1.0) + shape * cplx(scale, 0.0);
    while (holder_seminorm(g, p.alpha) > target * g.inf_real() || g.inf_real() <= 0.0) {
      scale *= 0.999;
      g = GridFunction::constant(grid, fiber, 1.0) + shape * cplx(scale, 0.0);
    }
    out.push_back(g * cplx(c, 0.0));
  }
  return out;
}

cplx GeneratingFunctional::operator()(const GridFunction& g, const ConeParams& p) const {
  return p.kappa * g[t] - (g[x] - g[y]) * inv_rho;
}

std::vector<GeneratingFunctional> generating_set(const Grid& grid, const ConeParams& p,
                                                 std::size_t random_triples, std::uint64_t seed,
                                                 std::size_t t_levels) {
  std::vector<GeneratingFunctional> set;
  const auto n = static_cast<std::uint32_t>(grid.nodes());
  auto make = [&](std::uint32_t x, std::uint32_t y, std::uint32_t t) {
    const double rho = std::abs(grid.node(x) - grid.node(y));
    return GeneratingFunctional{x, y, t, 1.0 / std::pow(rho, p.alpha)};
  };
  t_levels = std::max<std::size_t>(t_levels, 2);
  std::vector<std::uint32_t> ts;
  for (std::size_t l = 0; l < t_levels; ++l)
    ts.push_back(static_cast<std::uint32_t>(l * (n - 1) / (t_levels - 1)));
  for (std::uint32_t i = 0; i + 1 < n; ++i)
    for (auto t : ts) {
      set.push_back(make(i, i + 1, t));
      set.push_back(make(i + 1, i, t));
    }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, n - 1);
  while (random_triples > 0) {
    const auto x = pick(rng), y = pick(rng), t = pick(rng);
    if (x == y) continue;
    set.push_back(make(x, y, t));
    --random_triples;
  }
  return set;
}

double hilbert_distance(const GridFunction& f, const GridFunction& g, const ConeParams& p,
                        std::span<const GeneratingFunctional> set) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  const double tol = 1e-14 * p.kappa * std::max(f.sup_norm(), g.sup_norm());
  for (const auto& s : set) {
    const double sf = s(f, p).real(), sg = s(g, p).real();
    if (sf <= tol || sg <= tol) return kBoundary;
    const double r = sf / sg;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (set.empty()) return 0.0;
  return std::max(0.0, std::log(hi / lo));
}

double hilbert_distance(const GridFunction& f, const GridFunction& g, const ConeParams& p,
                        std::size_t triple_samples, std::uint64_t seed) {
  const auto set = generating_set(f.grid(), p, triple_samples, seed);
  return hilbert_distance(f, g, p, set);
}

double sampled_diameter(std::span<const GridFunction> fs, const ConeParams& p,
                        std::span<const GeneratingFunctional> set) {
  std::vector<double> row(fs.size(), 0.0);
  parallel_for(fs.size(), [&](std::size_t a) {
    for (std::size_t b = a + 1; b < fs.size(); ++b)
      row[a] = std::max(row[a], hilbert_distance(fs[a], fs[b], p, set));
  });
  double d = 0.0;
  for (double r : row) d = std::max(d, r);
  return d;
}

InvarianceReport check_invariance(const TransferContext& ctx, std::int64_t j,
                                  const ConeParams& p, std::size_t samples, std::uint64_t seed) {
  if (!(p.zeta < 1.0)) throw ParameterError("cone invariance: zeta must be below 1");
  const double vphi = fiber_bounds(ctx.system(), j, 1024).potential_seminorm;
  if (!(vphi < p.kappa * p.delta_slack)) {
    std::ostringstream msg;
    msg << "cone invariance: kappa = " << p.kappa << " below v(phi)/delta = "
        << vphi / p.delta_slack;
    throw ParameterError(msg.str());
  }
  const auto gs = sample_cone(p, ctx.grid(), j, samples, seed);
  const ZParam zero = zero_param(ctx.dim());
  std::vector<double> ratio(gs.size());
  parallel_for(gs.size(), [&](std::size_t i) {
    const GridFunction Lg = ctx.apply(j, zero, gs[i]);
    ratio[i] = holder_seminorm(Lg, p.alpha) / (p.kappa * Lg.inf_real());
  });
  InvarianceReport r;
  r.samples = gs.size();
  r.bound = p.zeta;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    if (ratio[i] <= p.zeta) ++r.passed;
    if (ratio[i] > r.worst_ratio) {
      r.worst_ratio = ratio[i];
      r.witness = i;
    }
  }
  r.pass = r.passed == r.samples;
  return r;
}

DiameterReport estimate_diameter(const TransferContext& ctx, std::int64_t j, const ConeParams& p,
                                 std::size_t samples, std::uint64_t seed,
                                 std::size_t triple_samples) {
  const auto gs = sample_cone(p, ctx.grid(), j, samples, seed);
  const ZParam zero = zero_param(ctx.dim());
  std::vector<GridFunction> images;
  for (const auto& g : gs) images.push_back(ctx.apply(j, zero, g));
  const auto set = generating_set(ctx.grid(), p, triple_samples, derive_seed(seed, 1));
  DiameterReport r;
  r.diameter = sampled_diameter(images, p, set);
  r.finite = std::isfinite(r.diameter);
  return r;
}

ApertureReport check_aperture(const ConeParams& p, std::span<const GridFunction> samples,
                              std::size_t anchor) {
  ApertureReport r;
  for (const auto& g : samples) {
    if (anchor >= g.size()) throw ParameterError("aperture: anchor outside the grid");
    const double ratio = holder_norm(g, p.alpha) / ((1.0 + 2.0 * p.kappa) * g[anchor].real());
    ++r.samples;
    if (ratio <= 1.0 + 1e-12) ++r.passed;
    r.worst_ratio = std::max(r.worst_ratio, ratio);
  }
  return r;
}

Decomposition cone_decompose(const GridFunction& g, const ConeParams& p) {
  Decomposition d;
  const double gnorm = holder_norm(g, p.alpha);
  const GridFunction re = real_part_of(g), im = imag_part_of(g);
  const bool has_imag = im.sup_norm() > 0.0;
  auto split = [&](const GridFunction& part, cplx unit) {
    if (part.sup_norm() == 0.0) return;
    if (cone_member(part, p).member) {
      d.parts.push_back(part * unit);
      d.coeff.push_back(unit);
      return;
    }
    // c = sup|g| + v(g)/κ makes g + c a member: inf(g + c) ≥ v(g)/κ.
    const double c = part.sup_norm() + holder_seminorm(part, p.alpha) / p.kappa;
    GridFunction shifted = part + GridFunction::constant(part.grid(), part.fiber(), c);
    const GridFunction constant = GridFunction::constant(part.grid(), part.fiber(), c);
    const Membership m = cone_member(shifted, p);
    // inf(g + c) = v/κ exactly, so the margin is zero up to roundoff of size κc.
    d.members = d.members && (m.member || m.margin >= -1e-12 * (1.0 + p.kappa * c));
    d.parts.push_back(shifted * unit);
    d.coeff.push_back(unit);
    d.parts.push_back(constant * (-unit));
    d.coeff.push_back(-unit);
  };
  split(re, 1.0);
  split(im, cplx(0.0, 1.0));
  for (const auto& part : d.parts) d.norm_sum += holder_norm(part, p.alpha);
  d.bound = 3.0 * (1.0 + 1.0 / p.kappa) * gnorm * (has_imag ? 2.0 : 1.0);
  return d;
}

PerturbationReport check_perturbation(const TransferContext& ctx, std::int64_t j,
                                      const ConeParams& p, std::span<const ZParam> z_list,
                                      std::span<const GeneratingFunctional> set,
                                      std::size_t samples, std::uint64_t seed) {
  const auto gs = sample_cone(p, ctx.grid(), j, samples, seed);
  const ZParam zero = zero_param(ctx.dim());
  std::vector<GridFunction> L0;
  for (const auto& g : gs) L0.push_back(ctx.apply(j, zero, g));
  PerturbationReport rep;
  for (const auto& z : z_list) {
    PerturbationRow row;
    row.z = z;
    const double zn = param_norm(z);
    if (zn > 0.0) {
      for (std::size_t i = 0; i < gs.size(); ++i) {
        const GridFunction D = ctx.apply(j, z, gs[i]) - L0[i];
        const double tol = 1e-14 * p.kappa * L0[i].sup_norm();
        for (const auto& s : set) {
          const double base = s(L0[i], p).real();
          if (base <= tol) {
            ++row.discarded;
            continue;
          }
          row.c_hat = std::max(row.c_hat, std::abs(s(D, p)) / (zn * base));
        }
      }
    }
    rep.rows.push_back(row);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : rep.rows) {
    if (param_norm(r.z) == 0.0) continue;
    lo = std::min(lo, r.c_hat);
    hi = std::max(hi, r.c_hat);
  }
  rep.spread = hi > 0.0 ? hi / lo : 1.0;
  return rep;
}

double complex_cone_check(const GridFunction& g, const ConeParams& p,
                          std::span<const GeneratingFunctional> set, std::size_t pairs,
                          std::uint64_t seed) {
  if (set.empty()) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs; ++k) {
    const cplx a = set[pick(rng)](g, p), b = set[pick(rng)](g, p);
    worst = std::min(worst, (std::conj(a) * b).real());
  }
  return worst;
}

FourNumber four_number_bound(cplx A, cplx A1, double B, double B1, double eps1, double zeta) {
  FourNumber r;
  r.hypotheses = B > B1 && std::abs(A - B) <= eps1 * B && std::abs(A1 - B1) <= eps1 * B &&
                 std::abs(B1 / B) <= zeta && zeta < 1.0 && eps1 > 0.0;
  r.lhs = std::abs((A - A1) / (B - B1) - 1.0);
  r.rhs = 2.0 * eps1 / (1.0 - zeta);
  return r;
}

}  // namespace seqtx
