#include "seqtx/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "seqtx/errors.hpp"
#include "seqtx/parallel.hpp"

namespace seqtx {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

std::vector<double> unit_or(std::span<const double> v, int d) {
  if (!v.empty()) {
    if (static_cast<int>(v.size()) != d)
      throw ParameterError("direction has the wrong dimension");
    return {v.begin(), v.end()};
  }
  std::vector<double> e(static_cast<std::size_t>(d), 0.0);
  e[0] = 1.0;
  return e;
}

double fold(double x, SpaceKind space) {
  if (space == SpaceKind::Circle) return x - std::floor(x);
  if (x < 0.0) x = -x;
  if (x > 1.0) x = 2.0 - x;
  return std::clamp(x, 0.0, 1.0);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Cumulative dual-cell masses of μ_j for inverse-CDF draws.
struct CellSampler {
  Grid grid;
  std::vector<double> cdf;

  CellSampler(const GibbsFamily& family, std::int64_t j) : grid(family.context().grid()) {
    const auto& mu = family.mu(j);
    cdf.resize(mu.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      acc += std::max(mu[i], 0.0);
      cdf[i] = acc;
    }
    if (!(acc > 0.0)) throw NumericError("sample_initial: μ has no positive mass");
    for (auto& c : cdf) c /= acc;
  }

  double draw(std::mt19937_64& rng) const {
    const double u = uniform01(rng);
    const auto i = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                 static_cast<std::ptrdiff_t>(cdf.size() - 1)));
    const double h = grid.spacing();
    const double lo = std::max(0.0, grid.node(i) - 0.5 * h);
    const double hi = std::min(1.0, grid.node(i) + 0.5 * h);
    return lo + (hi - lo) * uniform01(rng);
  }
};

std::vector<const Fiber*> fibers(const SequentialSystem& sys, std::int64_t start, std::size_t n) {
  std::vector<const Fiber*> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = &sys.fiber(start + static_cast<std::int64_t>(k));
  return out;
}

// Per-fiber data for the reversed chain, shared between fibers of one class.
struct ReverseFiber {
  const Fiber* fiber = nullptr;
  const std::vector<double>* h = nullptr;
};

double interp(const Grid& grid, const std::vector<double>& v, double y) {
  std::size_t i;
  double f;
  grid.locate(y, i, f);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + f * (v[i + 1] - v[i]);
}

// Time-reversed Gibbs chain on fibers j..j+n: y_n ~ μ_{j+n}, then the
// preimage of y_{k+1} on branch b with probability ∝ e^{φ(y)} h_{j+k}(y).
// (y_0, ..., y_n) is a μ_j-distributed orbit segment.
class ReverseChain {
 public:
  ReverseChain(const GibbsFamily& family, std::int64_t j, std::size_t n)
      : grid_(family.context().grid()), end_(family, j + static_cast<std::int64_t>(n)), rf_(n) {
    const auto& sys = family.context().system();
    for (std::size_t k = 0; k < n; ++k) {
      const std::int64_t jk = j + static_cast<std::int64_t>(k);
      auto [it, fresh] = hs_.try_emplace(sys.fiber_key(jk));
      if (fresh) it->second = family.h(jk).real_part();
      rf_[k] = {&sys.fiber(jk), &it->second};
    }
  }

  /// Calls visit(k, y_k) for k = n-1 down to 0.
  template <class V>
  void walk(std::mt19937_64& rng, V&& visit) const {
    double y = end_.draw(rng);
    std::vector<double> pre, p;
    for (std::size_t k = rf_.size(); k-- > 0;) {
      const Fiber& f = *rf_[k].fiber;
      const auto& br = f.map->branches;
      pre.resize(br.size());
      p.resize(br.size());
      double sp = 0.0;
      for (std::size_t b = 0; b < br.size(); ++b) {
        pre[b] = br[b].inverse(y);
        p[b] = std::exp(f.potential(pre[b])) * std::max(interp(grid_, *rf_[k].h, pre[b]), 0.0);
        sp += p[b];
      }
      double pick = uniform01(rng) * sp;
      std::size_t b = 0;
      while (b + 1 < br.size() && pick >= p[b]) pick -= p[b++];
      y = pre[b];
      visit(k, y);
    }
  }

 private:
  Grid grid_;
  CellSampler end_;
  std::map<std::int64_t, std::vector<double>> hs_;
  std::vector<ReverseFiber> rf_;
};

bool use_forward(const GibbsFamily& family, const SimConfig& cfg) {
  if (cfg.method == SimMethod::Forward) return true;
  if (cfg.method == SimMethod::Reverse) return false;
  return forward_orbits_valid(family, cfg.start);
}

}  // namespace

bool forward_orbits_valid(const GibbsFamily& family, std::int64_t j) {
  const Grid& grid = family.context().grid();
  for (std::int64_t jj : {j, j + 1}) {
    const auto nu = family.nu(jj);
    for (std::size_t i = 0; i < nu.size(); ++i) {
      const double w = grid.trapezoid_weight(i);
      if (std::abs(nu[i] - w) > 1e-6 * w) return false;
    }
  }
  return true;
}

BirkhoffSums reverse_chain_sums(const GibbsFamily& family, const SequentialSystem& obs,
                                const SimConfig& cfg) {
  cfg.validate();
  const int d = obs.observable_dim();
  if (d < 1) throw ParameterError("reverse_chain_sums: system has no observable");
  const auto ud = static_cast<std::size_t>(d);
  const std::size_t n_max = cfg.rungs.back();
  const ReverseChain chain(family, cfg.start, n_max);
  const auto fb = fibers(obs, cfg.start, n_max);
  const auto& rungs = cfg.rungs;

  BirkhoffSums out;
  out.rungs = rungs;
  out.d = d;
  out.replicas = cfg.replicas;
  out.sums.assign(rungs.size(), std::vector<double>(cfg.replicas * ud, 0.0));

  parallel_for(cfg.replicas, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, i));
    // tail = Σ_{m > k} u(y_m) while visiting k; S_n = total − tail at k = n − 1.
    std::vector<double> tail(ud, 0.0);
    std::vector<std::vector<double>> at(rungs.size());
    std::size_t r = rungs.size();
    chain.walk(rng, [&](std::size_t k, double y) {
      while (r > 0 && rungs[r - 1] == k + 1) at[--r] = tail;
      const Fiber& f = *fb[k];
      for (std::size_t a = 0; a < ud; ++a) tail[a] += f.observable.components[a](y);
    });
    while (r > 0) at[--r] = tail;  // rung 0
    for (std::size_t q = 0; q < rungs.size(); ++q)
      for (std::size_t a = 0; a < ud; ++a) out.sums[q][i * ud + a] = tail[a] - at[q][a];
  });
  return out;
}

void SimConfig::validate() const {
  if (replicas < 2) throw ParameterError("SimConfig: need at least two replicas");
  if (rungs.empty()) throw ParameterError("SimConfig: empty rung list");
  for (std::size_t i = 0; i < rungs.size(); ++i)
    if (i > 0 && rungs[i] <= rungs[i - 1])
      throw ParameterError("SimConfig: rungs must be strictly increasing");
  if (!(refresh >= 0.0)) throw ParameterError("SimConfig: negative refresh width");
}

std::vector<double> sample_initial(const GibbsFamily& family, std::int64_t j, std::size_t n,
                                   std::uint64_t seed) {
  const CellSampler cells(family, j);
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    out[i] = cells.draw(rng);
  });
  return out;
}

std::vector<double> BirkhoffSums::project(std::size_t r, std::span<const double> v) const {
  const auto dir = unit_or(v, d);
  std::vector<double> out(replicas);
  const auto& s = sums[r];
  for (std::size_t i = 0; i < replicas; ++i)
    out[i] = dot(std::span<const double>(s).subspan(i * static_cast<std::size_t>(d),
                                                    static_cast<std::size_t>(d)),
                 dir);
  return out;
}

BirkhoffSums birkhoff_sums(const SequentialSystem& sys, std::span<const double> points,
                           const SimConfig& cfg) {
  cfg.validate();
  const int d = sys.observable_dim();
  if (d < 1) throw ParameterError("birkhoff_sums: system has no observable");
  const auto ud = static_cast<std::size_t>(d);
  const std::size_t n_max = cfg.rungs.back();
  const auto fb = fibers(sys, cfg.start, n_max);

  BirkhoffSums out;
  out.rungs = cfg.rungs;
  out.d = d;
  out.replicas = points.size();
  out.sums.assign(cfg.rungs.size(), std::vector<double>(points.size() * ud, 0.0));

  parallel_for(points.size(), [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, i));
    std::vector<double> s(ud, 0.0);
    double x = points[i];
    std::size_t r = cfg.rungs.front() == 0 ? 1 : 0;  // S_0 = 0
    for (std::size_t k = 0; k < n_max; ++k) {
      const Fiber& f = *fb[k];
      for (std::size_t a = 0; a < ud; ++a) s[a] += f.observable.components[a](x);
      const double y = (*f.map)(x);
      if (!(y >= 0.0 && y <= 1.0))
        throw NumericError("birkhoff_sums: orbit left [0,1] at step " + std::to_string(k) +
                           " from x = " + std::to_string(x) + " (replica " + std::to_string(i) +
                           ")");
      x = y;
      if (cfg.refresh > 0.0) x = fold(x + cfg.refresh * (uniform01(rng) - 0.5), f.map->space);
      if (k + 1 == cfg.rungs[r]) {
        std::copy(s.begin(), s.end(), out.sums[r].begin() + static_cast<std::ptrdiff_t>(i * ud));
        ++r;
      }
    }
  });
  return out;
}

std::vector<double> quadrature_mean(const GibbsFamily& family, std::int64_t j, std::size_t n) {
  const auto& ctx = family.context();
  std::vector<double> m(static_cast<std::size_t>(ctx.dim()), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t jk = j + static_cast<std::int64_t>(k);
    for (int a = 0; a < ctx.dim(); ++a)
      m[static_cast<std::size_t>(a)] += family.expect(jk, ctx.observable(jk, a));
  }
  return m;
}

BirkhoffSums gaussian_control_sums(const SimConfig& cfg) {
  cfg.validate();
  BirkhoffSums out;
  out.rungs = cfg.rungs;
  out.d = 1;
  out.replicas = cfg.replicas;
  out.sums.assign(cfg.rungs.size(), std::vector<double>(cfg.replicas, 0.0));
  parallel_for(cfg.replicas, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, i));
    std::normal_distribution<double> normal;
    double s = 0.0;
    std::size_t prev = 0;
    for (std::size_t r = 0; r < cfg.rungs.size(); ++r) {
      s += std::sqrt(static_cast<double>(cfg.rungs[r] - prev)) * normal(rng);
      prev = cfg.rungs[r];
      out.sums[r][i] = s;
    }
  });
  return out;
}

StatReport clt_berry_esseen(const BirkhoffSums& sums, std::span<const double> direction,
                            std::span<const std::vector<double>> centre, double variance_floor,
                            double ratio_bound) {
  const auto dir = unit_or(direction, sums.d);
  StatReport rep;
  for (std::size_t r = 0; r < sums.rungs.size(); ++r) {
    auto x = sums.project(r, dir);
    RungStat st;
    st.n = sums.rungs[r];
    st.mean = mean(x);
    st.variance = variance(x);
    const double c = centre.empty() ? st.mean : dot(centre[r], dir);
    const double sd = std::sqrt(st.variance);
    st.degenerate = st.n == 0 || st.variance / static_cast<double>(st.n) < variance_floor;
    if (!st.degenerate) {
      for (auto& v : x) v = (v - c) / sd;
      st.ks = ks_normal(x);
      st.ks_sqrt_n = st.ks * std::sqrt(static_cast<double>(st.n));
      if (st.n >= 16) {
        // x is sorted and standardized here, so σ² = σ̂_n²/n makes the
        // envelope (1+η)√(2 log log n) in these units.
        const double env = std::sqrt(2.0 * std::log(std::log(static_cast<double>(st.n))));
        auto frac = [&](double eta) {
          const double thr = (1.0 + eta) * env;
          const auto lo_it = std::lower_bound(x.begin(), x.end(), -thr);
          const auto hi_it = std::upper_bound(x.begin(), x.end(), thr);
          const auto inside = hi_it - lo_it;
          return 1.0 - static_cast<double>(inside) / static_cast<double>(x.size());
        };
        st.exceed_02 = frac(0.2);
        st.exceed_05 = frac(0.5);
      }
    }
    rep.rungs.push_back(st);
  }
  rep.degenerate = rep.rungs.back().degenerate;
  if (rep.degenerate) {
    rep.verdict = "degenerate";
    return rep;
  }
  double lo = INFINITY, hi = 0.0;
  for (const auto& st : rep.rungs) {
    if (st.degenerate) continue;
    lo = std::min(lo, st.ks_sqrt_n);
    hi = std::max(hi, st.ks_sqrt_n);
  }
  rep.ks_ratio = hi / lo;
  rep.noise_band = 1.36 / std::sqrt(static_cast<double>(sums.replicas));
  rep.within_noise = std::all_of(rep.rungs.begin(), rep.rungs.end(), [&](const RungStat& st) {
    return !st.degenerate && st.ks <= rep.noise_band;
  });
  rep.improving = rep.rungs.back().ks < rep.rungs.front().ks;
  rep.pass = rep.ks_ratio <= ratio_bound && rep.improving;
  rep.verdict = rep.pass ? "pass" : "fail";
  return rep;
}

LilReport lil_envelope(std::span<const double> sums, double centre, std::size_t n, double sigma2,
                       std::span<const double> etas, double limit) {
  LilReport rep;
  rep.n = n;
  if (n < 16) throw ParameterError("lil_envelope: n must be at least 16");
  rep.degenerate = !(sigma2 > 0.0);
  if (rep.degenerate) return rep;
  const double nn = static_cast<double>(n);
  const double base = std::sqrt(2.0 * sigma2 * nn * std::log(std::log(nn)));
  rep.pass = true;
  for (double eta : etas) {
    const double thr = (1.0 + eta) * base;
    std::size_t over = 0;
    for (double s : sums)
      if (std::abs(s - centre) > thr) ++over;
    const double frac = static_cast<double>(over) / static_cast<double>(sums.size());
    rep.rows.push_back({eta, frac});
    if (eta >= 0.5 && frac > limit) rep.pass = false;
  }
  return rep;
}

namespace {

std::size_t total(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{0});
}

void check_blocks(const HBlocks& b, std::span<const std::vector<double>> t, double eps0) {
  if (b.first.empty() || b.second.empty())
    throw ParameterError("condition (H): both block groups must be nonempty");
  if (t.size() != b.first.size() + b.second.size())
    throw ParameterError("condition (H): need one t per block");
  for (const auto& tv : t) {
    double s = 0.0;
    for (double x : tv) s += x * x;
    if (eps0 > 0.0 && std::sqrt(s) > eps0)
      throw ParameterError("condition (H): |t| exceeds eps0");
  }
}

// Applies the blocks of `lens` from fiber j with parameters t[offset..].
GridFunction run_blocks(const NormalizedTransfer& tilde, std::int64_t& j, GridFunction g,
                        const std::vector<std::size_t>& lens,
                        std::span<const std::vector<double>> t, std::size_t offset) {
  for (std::size_t b = 0; b < lens.size(); ++b) {
    const ZParam z = imaginary_param(t[offset + b]);
    g = tilde.compose(j, lens[b], z, std::move(g));
    j += static_cast<std::int64_t>(lens[b]);
  }
  return g;
}

struct HQuad {
  cplx joint, first, second;
};

}  // namespace

HReport condition_H_gap(const NormalizedTransfer& tilde, const HBlocks& blocks,
                        std::span<const std::vector<double>> t, std::size_t k_max, double eps0,
                        double floor) {
  check_blocks(blocks, t, eps0);
  const auto& family = tilde.family();
  const Grid& grid = family.context().grid();
  const ZParam zero = zero_param(family.context().dim());
  const std::size_t nf = blocks.first.size();

  std::int64_t j = blocks.start;
  GridFunction g = run_blocks(tilde, j, GridFunction::constant(grid, blocks.start, 1.0),
                              blocks.first, t, 0);
  const std::int64_t e1 = j;
  const cplx first = integrate(family.mu(e1), g);

  HReport rep;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const std::int64_t jk = e1 + static_cast<std::int64_t>(k) - 1;
    g = tilde.apply(jk, zero, g);
    std::int64_t ja = jk + 1, jb = jk + 1;
    const GridFunction joint_fn = run_blocks(tilde, ja, g, blocks.second, t, nf);
    const GridFunction second_fn =
        run_blocks(tilde, jb, GridFunction::constant(grid, jk + 1, 1.0), blocks.second, t, nf);
    const cplx joint = integrate(family.mu(ja), joint_fn);
    const cplx product = first * integrate(family.mu(jb), second_fn);
    rep.k.push_back(k);
    rep.joint.push_back(joint);
    rep.product.push_back(product);
    rep.gap.push_back(std::abs(joint - product));
  }
  rep.floor = floor;
  std::vector<double> kd, gd;
  for (std::size_t i = 0; i < rep.k.size(); ++i) {
    kd.push_back(static_cast<double>(rep.k[i]));
    if (rep.gap[i] < floor) {
      rep.below_floor_at = rep.k[i];
      gd.push_back(floor);
      break;
    }
    gd.push_back(rep.gap[i]);
  }
  rep.fit = fit_exponential(kd, gd, 0.5 * floor);
  return rep;
}

HMonteCarlo condition_H_monte_carlo(const NormalizedTransfer& tilde, const HBlocks& blocks,
                                    std::span<const std::vector<double>> t, std::size_t k,
                                    const SimConfig& cfg) {
  check_blocks(blocks, t, 0.0);
  if (k == 0) throw ParameterError("condition (H): gap must be positive");
  const auto& family = tilde.family();
  const auto& sys = family.context().system();
  const int d = sys.observable_dim();
  const auto ud = static_cast<std::size_t>(d);
  const std::size_t n1 = total(blocks.first), n2 = total(blocks.second);
  const std::size_t steps = n1 + k + n2;
  const auto fb = fibers(sys, blocks.start, steps);

  // Block index per step, or -1 inside the gap.
  std::vector<int> block_of(steps, -1);
  {
    std::size_t pos = 0;
    int b = 0;
    for (auto len : blocks.first) {
      for (std::size_t s = 0; s < len; ++s) block_of[pos++] = b;
      ++b;
    }
    pos += k;
    for (auto len : blocks.second) {
      for (std::size_t s = 0; s < len; ++s) block_of[pos++] = b;
      ++b;
    }
  }
  const auto nf = static_cast<int>(blocks.first.size());

  std::vector<double> X1(cfg.replicas), X2(cfg.replicas);
  auto add = [&](std::size_t s, double x, double& a1, double& a2) {
    const int b = block_of[s];
    if (b < 0) return;
    const auto& tv = t[static_cast<std::size_t>(b)];
    double v = 0.0;
    for (std::size_t a = 0; a < ud; ++a) v += tv[a] * fb[s]->observable.components[a](x);
    (b < nf ? a1 : a2) += v;
  };
  if (use_forward(family, cfg)) {
    const auto x0 = sample_initial(family, blocks.start, cfg.replicas, derive_seed(cfg.seed, 0xA));
    parallel_for(cfg.replicas, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(cfg.seed, i));
      double x = x0[i], a1 = 0.0, a2 = 0.0;
      for (std::size_t s = 0; s < steps; ++s) {
        const Fiber& f = *fb[s];
        add(s, x, a1, a2);
        x = (*f.map)(x);
        if (cfg.refresh > 0.0) x = fold(x + cfg.refresh * (uniform01(rng) - 0.5), f.map->space);
      }
      X1[i] = a1;
      X2[i] = a2;
    });
  } else {
    const ReverseChain chain(family, blocks.start, steps);
    parallel_for(cfg.replicas, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(cfg.seed, i));
      double a1 = 0.0, a2 = 0.0;
      chain.walk(rng, [&](std::size_t s, double y) { add(s, y, a1, a2); });
      X1[i] = a1;
      X2[i] = a2;
    });
  }

  const double N = static_cast<double>(cfg.replicas);
  auto stat = [&](auto phase, cplx q, cplx& est) {
    double sr = 0.0, si = 0.0, qr = 0.0, qi = 0.0;
    for (std::size_t i = 0; i < cfg.replicas; ++i) {
      const double p = phase(i);
      const double c = std::cos(p), s = std::sin(p);
      sr += c;
      si += s;
      qr += c * c;
      qi += s * s;
    }
    est = {sr / N, si / N};
    const double se_r = std::sqrt(std::max(qr / N - est.real() * est.real(), 1e-300) / N);
    const double se_i = std::sqrt(std::max(qi / N - est.imag() * est.imag(), 1e-300) / N);
    return std::max(std::abs(est.real() - q.real()) / se_r, std::abs(est.imag() - q.imag()) / se_i);
  };

  // Quadrature values at this k.
  const Grid& grid = family.context().grid();
  const ZParam zero = zero_param(d);
  std::int64_t j = blocks.start;
  GridFunction g = run_blocks(tilde, j, GridFunction::constant(grid, blocks.start, 1.0),
                              blocks.first, t, 0);
  HMonteCarlo out;
  out.first_q = integrate(family.mu(j), g);
  g = tilde.compose(j, k, zero, std::move(g));
  j += static_cast<std::int64_t>(k);
  std::int64_t ja = j, jb = j;
  g = run_blocks(tilde, ja, std::move(g), blocks.second, t, static_cast<std::size_t>(nf));
  out.joint_q = integrate(family.mu(ja), g);
  const GridFunction g2 = run_blocks(tilde, jb, GridFunction::constant(grid, j, 1.0),
                                     blocks.second, t, static_cast<std::size_t>(nf));
  out.second_q = integrate(family.mu(jb), g2);

  out.z_first = stat([&](std::size_t i) { return X1[i]; }, out.first_q, out.first_mc);
  out.z_second = stat([&](std::size_t i) { return X2[i]; }, out.second_q, out.second_mc);
  out.z_joint = stat([&](std::size_t i) { return X1[i] + X2[i]; }, out.joint_q, out.joint_mc);
  out.pass = out.z_first <= 3.0 && out.z_second <= 3.0 && out.z_joint <= 3.0;
  return out;
}

namespace {

MdpRow finish_row(double x, double target, std::span<const double> w, std::size_t hits,
                  double b_n, std::size_t n, double band) {
  MdpRow row;
  row.x = x;
  row.target = target;
  row.hits = hits;
  const double N = static_cast<double>(w.size());
  double s = 0.0, q = 0.0;
  for (double v : w) {
    s += v;
    q += v * v;
  }
  row.probability = s / N;
  row.std_error = std::sqrt(std::max(q / N - row.probability * row.probability, 0.0) / N);
  row.insufficient = hits < 10 || !(row.probability > 0.0);
  if (!row.insufficient) {
    row.rate = static_cast<double>(n) / (b_n * b_n) * std::log(row.probability);
    row.relative_error = std::abs(row.rate - target) / std::abs(target);
    row.within = row.relative_error <= band;
  }
  return row;
}

void check_mdp(const MdpOptions& opt) {
  if (!(opt.gamma > 0.5 && opt.gamma < 1.0))
    throw ParameterError("mdp: gamma must lie in (1/2, 1)");
  if (opt.n < 2 || opt.replicas < 2) throw ParameterError("mdp: n and replicas must be >= 2");
  for (double x : opt.x)
    if (!(x > 0.0)) throw ParameterError("mdp: x must be positive");
}

}  // namespace

MdpReport mdp_check(const GibbsFamily& family, std::int64_t j, const MdpOptions& opt,
                    double sigma2, std::span<const double> direction) {
  check_mdp(opt);
  if (!(sigma2 > 0.0)) throw NumericError("mdp: variance estimate is not positive");
  const auto& ctx = family.context();
  const auto& sys = ctx.system();
  const Grid& grid = ctx.grid();
  const auto dir = unit_or(direction, ctx.dim());
  const std::size_t n = opt.n;

  std::map<std::int64_t, std::vector<double>> hs;
  std::vector<ReverseFiber> rf(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t jk = j + static_cast<std::int64_t>(k);
    auto [it, fresh] = hs.try_emplace(sys.fiber_key(jk));
    if (fresh) it->second = family.h(jk).real_part();
    rf[k] = {&sys.fiber(jk), &it->second};
  }
  const auto mean_s = quadrature_mean(family, j, n);
  const double centre = dot(mean_s, dir);
  const CellSampler end_cells(family, j + static_cast<std::int64_t>(n));

  MdpReport rep;
  rep.b_n = std::pow(static_cast<double>(n), opt.gamma);
  rep.sigma = std::sqrt(sigma2);
  rep.pass = true;
  for (std::size_t xi = 0; xi < opt.x.size(); ++xi) {
    const double x = opt.x[xi];
    const double thr = centre + x * rep.sigma * rep.b_n;
    const double tau = x * rep.b_n / (static_cast<double>(n) * rep.sigma);
    std::vector<double> w(opt.replicas, 0.0);
    std::vector<char> hit(opt.replicas, 0);
    parallel_for(opt.replicas, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(derive_seed(opt.seed, xi), i));
      double y = end_cells.draw(rng);
      double s = 0.0, log_w = 0.0, prod = 1.0;
      std::vector<double> pre, p, q, uu;
      for (std::size_t kk = n; kk-- > 0;) {
        const Fiber& f = *rf[kk].fiber;
        const auto& br = f.map->branches;
        pre.resize(br.size());
        p.resize(br.size());
        q.resize(br.size());
        uu.resize(br.size());
        double sp = 0.0, sq = 0.0;
        for (std::size_t b = 0; b < br.size(); ++b) {
          const double z = br[b].inverse(y);
          double u = 0.0;
          for (std::size_t a = 0; a < dir.size(); ++a)
            if (dir[a] != 0.0) u += dir[a] * f.observable.components[a](z);
          pre[b] = z;
          uu[b] = u;
          p[b] = std::exp(f.potential(z)) * std::max(interp(grid, *rf[kk].h, z), 0.0);
          q[b] = p[b] * std::exp(tau * u);
          sp += p[b];
          sq += q[b];
        }
        double pick = uniform01(rng) * sq;
        std::size_t b = 0;
        while (b + 1 < br.size() && pick >= q[b]) pick -= q[b++];
        prod *= sq / sp;
        log_w -= tau * uu[b];
        s += uu[b];
        y = pre[b];
        if ((kk & 31) == 0) {
          log_w += std::log(prod);
          prod = 1.0;
        }
      }
      log_w += std::log(prod);
      if (s > thr) {
        hit[i] = 1;
        w[i] = std::exp(log_w);
      }
    });
    const auto hits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    auto row = finish_row(x, -0.5 * x * x, w, hits, rep.b_n, n, opt.band);
    rep.pass = rep.pass && row.within;
    rep.rows.push_back(row);
  }
  return rep;
}

MdpReport mdp_gaussian_control(const MdpOptions& opt) {
  check_mdp(opt);
  const double n = static_cast<double>(opt.n);
  MdpReport rep;
  rep.b_n = std::pow(n, opt.gamma);
  rep.sigma = 1.0;
  rep.pass = true;
  for (std::size_t xi = 0; xi < opt.x.size(); ++xi) {
    const double x = opt.x[xi];
    const double thr = x * rep.b_n;
    const double tau = thr / n;
    std::vector<double> w(opt.replicas, 0.0);
    std::vector<char> hit(opt.replicas, 0);
    parallel_for(opt.replicas, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(derive_seed(opt.seed, xi), i));
      std::normal_distribution<double> normal;
      const double s = tau * n + std::sqrt(n) * normal(rng);
      if (s > thr) {
        hit[i] = 1;
        w[i] = std::exp(-tau * s + 0.5 * n * tau * tau);
      }
    });
    const auto hits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    auto row = finish_row(x, -0.5 * x * x, w, hits, rep.b_n, opt.n, opt.band);
    rep.pass = rep.pass && row.within;
    rep.rows.push_back(row);
  }
  return rep;
}

CoboundaryReport coboundary_control(const GibbsFamily& family, const ScalarFn& r,
                                    const SimConfig& cfg) {
  cfg.validate();
  const auto& sys = family.context().system();
  const SequentialSystem cob = sys.with_observable([r](std::int64_t, const Fiber& f) {
    auto map = f.map;
    return Observable::scalar([r, map](double x) { return r((*map)(x)) - r(x); });
  });

  BirkhoffSums sc, sg;
  if (use_forward(family, cfg)) {
    const auto points = sample_initial(family, cfg.start, cfg.replicas, derive_seed(cfg.seed, 0xB));
    sc = birkhoff_sums(cob, points, cfg);
    sg = birkhoff_sums(sys, points, cfg);
  } else {
    // Same seed, so both observables are summed along the same orbits.
    sc = reverse_chain_sums(family, cob, cfg);
    sg = reverse_chain_sums(family, sys, cfg);
  }

  CoboundaryReport rep;
  rep.rungs = cfg.rungs;
  {
    const auto& mu = family.mu(cfg.start);
    const Grid& grid = family.context().grid();
    double m = 0.0, q = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double v = r(grid.node(i));
      m += mu[i] * v;
      q += mu[i] * v * v;
    }
    rep.var_r = std::max(q - m * m, 0.0);
  }
  std::vector<double> nd;
  rep.bounded = true;
  for (std::size_t k = 0; k < cfg.rungs.size(); ++k) {
    rep.var_coboundary.push_back(variance(sc.project(k, {})));
    rep.var_generic.push_back(variance(sg.project(k, cfg.direction)));
    nd.push_back(static_cast<double>(cfg.rungs[k]));
    if (rep.var_coboundary.back() > 4.0 * rep.var_r + 0.01) rep.bounded = false;
  }
  if (cfg.rungs.size() >= 2) {
    rep.slope_coboundary = fit_line(nd, rep.var_coboundary).slope;
    rep.slope_generic = fit_line(nd, rep.var_generic).slope;
  }
  rep.pass = rep.bounded && rep.slope_coboundary <= 1e-2 * std::abs(rep.slope_generic);
  return rep;
}

}  // namespace seqtx
