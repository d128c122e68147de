// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "seqtx/cones.hpp"
#include "seqtx/montecarlo.hpp"
#include "seqtx/parallel.hpp"
#include "seqtx/pipeline.hpp"
#include "seqtx/spectral.hpp"
#include "seqtx/ulam.hpp"

#ifndef SEQTX_CONFIG_DIR
#define SEQTX_CONFIG_DIR "configs"
#endif

using namespace seqtx;
namespace fs = std::filesystem;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScalarFn cosine() {
  return [](double x) { return std::cos(kTau * x); };
}
SequentialSystem doubling() {
  return make_homogeneous(make_linear_expanding(2), nullptr, Observable::scalar(cosine()));
}
SequentialSystem mp(double beta = 0.5) {
  return make_homogeneous(make_mp_map(beta), nullptr, Observable::scalar([](double x) { return x; }));
}

// Simulation seeds follow the pipeline: derive_seed(config seed, stage index).
std::uint64_t demo_seed() {
  static const std::uint64_t seed =
      RunConfig::load(std::string(SEQTX_CONFIG_DIR) + "/doubling.cfg").seed;
  return seed;
}

struct Setup {
  TransferContext ctx;
  RpfSolver solver;
  GibbsFamily fam;
  NormalizedTransfer tilde;
  Setup(SequentialSystem sys, std::size_t cells, std::size_t depth = 40)
      : ctx(std::move(sys), cells), solver(ctx, [depth] {
          RpfConfig rc;
          rc.depth = depth;
          return rc;
        }()),
        fam(solver), tilde(fam) {}
};

Outcome rpf_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double dl = 0, dh = 0, dnu = 0;
  for (int m : {2, 3}) {
    const TransferContext ctx(make_homogeneous(make_linear_expanding(m), nullptr, Observable::zero()),
                              4096);
    RpfConfig rc;
    rc.depth = 30;
    const auto t = RpfSolver(ctx, rc).solve(0, zero_param(1));
    dl = std::max(dl, std::abs(t.lambda - double(m)));
    for (std::size_t i = 0; i < t.h.size(); ++i) {
      dh = std::max(dh, std::abs(t.h[i] - 1.0));
      dnu = std::max(dnu, std::abs(t.nu[i] - ctx.grid().trapezoid_weight(i)));
    }
  }
  const double secs = seconds_since(t0);
  return {dl <= 1e-8 && dh <= 1e-8 && dnu <= 1e-6 && secs < 5.0,
          fmt("|lambda-m|=%.2e |h-1|=%.2e |nu-unif|=%.2e time=%.2fs", dl, dh, dnu, secs)};
}

struct UlamDiff {
  double lambda = 0.0, ulam = 0.0, rel = 0.0, h = 0.0;
};

UlamDiff ulam_compare(double t) {
  const auto sys = make_homogeneous(
      make_mp_map(0.5), [t](double x) { return t * std::cos(kTau * x); }, Observable::zero());
  const std::size_t cells = 1024;
  const auto eig = ulam_dominant(build_ulam(sys, 0, cells));
  Setup s(sys, cells);
  const auto h = s.solver.h(0, zero_param(1));
  // Cell averages of the collocation h, both normalized to mean one.
  std::vector<double> hc(cells);
  double mean_c = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    hc[c] = 0.5 * (h[c] + h[c + 1]).real();
    mean_c += hc[c] / static_cast<double>(cells);
  }
  double diff = 0.0, sup = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    diff = std::max(diff, std::abs(hc[c] / mean_c - eig.density[c]));
    sup = std::max(sup, std::abs(eig.density[c]));
  }
  UlamDiff d;
  d.lambda = s.fam.lambda(0);
  d.ulam = eig.lambda;
  d.rel = std::abs(d.lambda - d.ulam) / d.ulam;
  d.h = diff / sup;
  return d;
}

// φ = 0 is the stated case; λ = d and h ≡ 1 there, so a nonconstant
// potential is compared as well.
Outcome ulam_cross_check() {
  const auto a = ulam_compare(0.0), b = ulam_compare(0.1);
  return {a.rel <= 0.01 && a.h <= 0.02 && b.rel <= 0.01 && b.h <= 0.02,
          fmt("phi=0: lambda=%.8f ulam=%.8f h diff %.2e; phi=0.1cos: lambda=%.8f ulam=%.8f "
              "rel=%.2e h diff %.2e",
              a.lambda, a.ulam, a.h, b.lambda, b.ulam, b.rel, b.h)};
}

Outcome conformality() {
  Setup s(mp(), 4096);
  const auto sets = random_branch_intervals(s.ctx.system().map(0), 20, 1);
  const double r = check_conformal(s.fam, 0, sets).max_relative_residual;
  return {r <= 1e-3, fmt("max relative residual %.3e over 20 intervals", r)};
}

Outcome exp_convergence() {
  Setup m(mp(), 4096);
  const auto gm = m.ctx.sample(0, [](double x) { return cplx(x, 0); });
  const auto fm = check_exp_convergence(m.solver, 0, zero_param(1), gm, 25).fit;
  Setup d(doubling(), 4096, 30);
  const auto gd = d.ctx.sample(0, [](double x) { return cplx(x, 0); });
  const auto fd = check_exp_convergence(d.solver, 0, zero_param(1), gd, 25).fit;
  const bool ok = fm.delta < 1.0 && fm.r2 >= 0.95 && fd.r2 >= 0.95 && fd.delta >= 0.45 &&
                  fd.delta <= 0.55;
  return {ok, fmt("mp delta=%.4f r2=%.4f; doubling delta=%.4f r2=%.4f", fm.delta, fm.r2, fd.delta,
                  fd.r2)};
}

Outcome decay_correlations() {
  Setup s(mp(), 4096);
  const double m = s.fam.expect(0, s.ctx.sample(0, [](double x) { return cplx(x, 0); }));
  auto g = [m](double x) { return x - m; };
  const auto r = check_decay_correlations(s.fam, 0, g, g, 25);
  std::vector<double> n, lg;
  for (std::size_t k = 1; k < r.sequence.size(); ++k)
    if (r.sequence[k] > 0.0) {
      n.push_back(static_cast<double>(k));
      lg.push_back(std::log(r.sequence[k]));
    }
  const auto fit = fit_line(n, lg);
  return {fit.slope < 0.0 && fit.r2 >= 0.9,
          fmt("log-gap slope %.4f (delta %.4f) r2=%.4f over %zu points", fit.slope,
              std::exp(fit.slope), fit.r2, fit.points)};
}

Outcome cone_hypotheses() {
  const auto sys = mp();
  const double s = compute_s(sys).s;
  const auto p = make_cone_params(sys, 0.1);
  Setup e(sys, 4096);
  const auto inv = check_invariance(e.ctx, 0, p, 100, derive_seed(1, 1));
  const auto S = sample_cone(p, e.ctx.grid(), 0, 500, derive_seed(1, 2));
  const auto ap = check_aperture(p, S, 0);

  std::mt19937_64 rng(derive_seed(1, 3));
  std::normal_distribution<double> N;
  std::size_t dec_ok = 0;
  for (int k = 0; k < 500; ++k) {
    const double a = N(rng), b = N(rng), c = N(rng), w = 0.02 + 0.3 * std::abs(N(rng));
    const auto g = e.ctx.sample(0, [&](double x) {
      return cplx(a * std::cos(6 * x) + b * std::exp(-(x - 0.3) * (x - 0.3) / w), c * x);
    });
    const auto d = cone_decompose(g, p);
    GridFunction sum(e.ctx.grid(), 0);
    for (const auto& q : d.parts) sum += q;
    if (d.members && d.norm_sum <= d.bound && (sum - g).sup_norm() <= 1e-12 * (1 + g.sup_norm()))
      ++dec_ok;
  }

  const double m = e.fam.expect(0, e.ctx.sample(0, [](double x) { return cplx(x, 0); }));
  const TransferContext cctx(sys.with_observable([m](std::int64_t, const Fiber&) {
    return Observable::scalar([m](double x) { return x - m; });
  }),
                             4096);
  const auto set = generating_set(cctx.grid(), p, 2000, derive_seed(1, 4));
  const std::vector<ZParam> zs{scalar_param(0.1), scalar_param(0.01), scalar_param(0.001)};
  const auto pr = check_perturbation(cctx, 0, p, zs, set, 10, derive_seed(1, 5));

  const bool ok = std::abs(s - 0.75) <= 1e-12 && inv.passed == 100 && inv.samples == 100 &&
                  p.zeta < 1.0 && ap.passed == 500 && dec_ok == 500 && pr.spread <= 2.0;
  return {ok, fmt("s=%.15f invariance %zu/100 (zeta=%.3f worst %.4f) aperture %zu/500 "
                  "decomposition %zu/500 c_hat spread %.3f",
                  s, inv.passed, p.zeta, inv.worst_ratio, ap.passed, dec_ok, pr.spread)};
}

Outcome norm_decay() {
  Setup s(doubling(), 4096);
  const std::vector<double> ts{0.05, 0.1, 0.2};
  const auto r = norm_decay_scan(s.tilde, 0, ts, NormDecayOptions{});
  bool ok = r.uniform_bound <= 10.0;
  for (const auto& row : r.rows) ok = ok && row.fit.slope < 0.0;
  const double q1 = r.rows[1].fit.slope / r.rows[0].fit.slope;
  const double q2 = r.rows[2].fit.slope / r.rows[1].fit.slope;
  ok = ok && q1 >= 2 && q1 <= 8 && q2 >= 2 && q2 <= 8;
  return {ok, fmt("slopes %.3e %.3e %.3e  ratios %.3f %.3f  U=%.4f", r.rows[0].fit.slope,
                  r.rows[1].fit.slope, r.rows[2].fit.slope, q1, q2, r.uniform_bound)};
}

Outcome cov_hessian() {
  Setup s(doubling(), 4096);
  std::vector<std::size_t> ns;
  for (std::size_t n = 1; n <= 200; ++n) ns.push_back(n);
  const auto r = check_cov_hessian(s.fam, 0, ns);
  double exact = 0.0, growth = INFINITY;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double n = static_cast<double>(ns[i]);
    exact = std::max(exact, std::abs(r.variance[i] - 0.5 * n));
    growth = std::min(growth, r.variance[i] / n);
  }
  return {r.max_difference <= 0.05 && growth >= 0.4 && exact <= 1e-6,
          fmt("max|Var-Hess|=%.3e min Var/n=%.6f max|Var-n/2|=%.2e", r.max_difference, growth,
              exact)};
}

Outcome variance_growth() {
  Setup s(doubling(), 4096);
  SimConfig cfg;
  cfg.replicas = 20000;
  cfg.rungs = {256, 1024, 4096};
  cfg.seed = derive_seed(demo_seed(), 9);
  const auto x = sample_initial(s.fam, 0, cfg.replicas, derive_seed(demo_seed(), 10));
  const auto sums = birkhoff_sums(s.ctx.system(), x, cfg);
  const double v = variance(sums.project(1, {})) / 1024.0;
  cfg.seed = derive_seed(demo_seed(), 13);
  const auto cb = coboundary_control(s.fam, cosine(), cfg);
  double worst = 0.0;
  for (double w : cb.var_coboundary) worst = std::max(worst, w);
  return {v >= 0.45 && v <= 0.55 && cb.bounded,
          fmt("generic Var/n(1024)=%.4f; coboundary max Var=%.4f <= 4Var(r)+0.01=%.4f", v, worst,
              4 * cb.var_r + 0.01)};
}

Outcome condition_h() {
  Setup s(doubling(), 4096);
  const std::vector<std::vector<double>> t{{0.1}, {0.1}};
  const auto h = condition_H_gap(s.tilde, HBlocks{}, t, 30, 0.2);
  SimConfig cfg;
  cfg.replicas = 20000;
  cfg.seed = derive_seed(demo_seed(), 11);
  const std::vector<std::vector<double>> tm{{0.2}, {0.2}};
  const auto mc = condition_H_monte_carlo(s.tilde, HBlocks{}, tm, 2, cfg);
  const bool ok = h.gap.back() <= 1e-6 && std::log(h.fit.delta) < 0.0 && mc.pass;
  return {ok, fmt("gap(30)=%.2e fitted log delta=%.3f (floor reached at k=%zu); MC z=%.2f %.2f %.2f",
                  h.gap.back(), std::log(h.fit.delta), h.below_floor_at, mc.z_joint, mc.z_first,
                  mc.z_second)};
}

Outcome berry_esseen() {
  const auto t0 = std::chrono::steady_clock::now();
  Setup s(doubling(), 4096);
  SimConfig cfg;
  cfg.replicas = 20000;
  cfg.rungs = {256, 1024, 4096};
  cfg.seed = derive_seed(demo_seed(), 9);
  const auto x = sample_initial(s.fam, 0, cfg.replicas, derive_seed(demo_seed(), 10));
  const auto sums = birkhoff_sums(s.ctx.system(), x, cfg);
  std::vector<std::vector<double>> centre;
  for (auto n : cfg.rungs) centre.push_back(quadrature_mean(s.fam, 0, n));
  const auto be = clt_berry_esseen(sums, {}, centre);
  const double secs = seconds_since(t0);
  return {be.ks_ratio <= 3.0 && be.improving && secs < 120.0,
          fmt("KS %.4f %.4f %.4f (noise band %.4f)  KS*sqrt(n) ratio %.3f  time=%.1fs",
              be.rungs[0].ks, be.rungs[1].ks, be.rungs[2].ks, be.noise_band, be.ks_ratio, secs)};
}

Outcome mdp() {
  MdpOptions opt;
  opt.gamma = 0.7;
  opt.n = 4096;
  opt.replicas = 100000;
  opt.x = {1.0};
  opt.seed = derive_seed(demo_seed(), 12);
  const auto g = mdp_gaussian_control(opt);
  if (!g.pass)
    return {false, fmt("gaussian control outside the band: rate %.4f", g.rows[0].rate)};
  Setup s(doubling(), 4096);
  const auto cov = covariance_curve(s.fam, 0, opt.n);
  const double s2 = cov.var(opt.n) / static_cast<double>(opt.n);
  const auto r = mdp_check(s.fam, 0, opt, s2);
  return {r.pass, fmt("control rate %.4f; doubling rate %.4f (target -0.5, band +-50%%)",
                      g.rows[0].rate, r.rows[0].rate)};
}

Outcome stability() {
  Setup base(mp(0.5), 2048);
  StabilityOptions opt;
  double prev = INFINITY;
  bool ok = true;
  std::string detail = "sup ||dVar||/n:";
  for (double db : {0.04, 0.02, 0.01}) {
    Setup p(mp(0.5 + db), 2048);
    const auto r = stability_scan(base.fam, p.fam, opt);
    ok = ok && r.sup_ratio < prev;
    prev = r.sup_ratio;
    detail += fmt(" db=%.2f:%.4e", db, r.sup_ratio);
  }
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const auto cfg = RunConfig::load(std::string(SEQTX_CONFIG_DIR) + "/doubling.cfg");
  const auto root = fs::temp_directory_path() / "seqtx-acceptance-determinism";
  fs::remove_all(root);
  PipelineOptions opt;
  opt.use_cache = false;
  opt.out = root / "a";
  set_worker_count(1);
  const auto a = run_pipeline(cfg, default_stages(), opt);
  opt.out = root / "b";
  set_worker_count(0);
  const auto b = run_pipeline(cfg, default_stages(), opt);
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
  }
  fs::remove_all(root);
  return {a.exit_code == 0 && b.exit_code == 0 && files > 0 && differ == 0,
          fmt("%zu report files, %zu differ (1 worker vs default workers); exit codes %d %d",
              files, differ, a.exit_code, b.exit_code)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"RPF oracle (linear maps)", rpf_oracle},
      {"Ulam cross-check", ulam_cross_check},
      {"Conformality", conformality},
      {"Exponential convergence", exp_convergence},
      {"Decay of correlations", decay_correlations},
      {"Cone hypotheses", cone_hypotheses},
      {"Norm decay", norm_decay},
      {"Covariance-Hessian", cov_hessian},
      {"Variance growth and negative control", variance_growth},
      {"Condition (H)", condition_h},
      {"Berry-Esseen proxy", berry_esseen},
      {"MDP smoke", mdp},
      {"Stability", stability},
      {"Determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
