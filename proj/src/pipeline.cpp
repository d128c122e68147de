#include "seqtx/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include "seqtx/cones.hpp"
#include "seqtx/errors.hpp"
#include "seqtx/montecarlo.hpp"
#include "seqtx/normalized.hpp"
#include "seqtx/parallel.hpp"
#include "seqtx/rpf.hpp"
#include "seqtx/spectral.hpp"

#ifndef SEQTX_VERSION
#define SEQTX_VERSION "dev"
#endif

namespace seqtx {

std::string code_version() { return SEQTX_VERSION; }

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{
      "pairing",           "s-check",           "rpf",
      "cones",             "spectral.pressure", "spectral.variance",
      "spectral.norm-decay", "spectral.stability", "simulate",
      "limit-tests"};
  return order;
}

std::vector<std::string> default_stages() {
  return {"pairing", "s-check", "rpf", "cones", "spectral", "simulate"};
}

std::vector<std::string> expand_stages(const std::vector<std::string>& requested) {
  const auto& order = stage_order();
  std::vector<bool> want(order.size(), false);
  for (const auto& s : requested) {
    bool hit = false;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] == s || (s == "spectral" && order[i].rfind("spectral.", 0) == 0)) {
        want[i] = true;
        hit = true;
      }
    if (!hit) throw ConfigError("unknown stage '" + s + "'");
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (want[i]) out.push_back(order[i]);
  return out;
}

int exit_code(const Results& r) {
  if (!r.error.empty()) return 3;
  return r.pass() ? 0 : 2;
}

namespace {

const std::vector<std::string> kSystemKeys{"map.", "seq.", "potential.", "observable.", "alpha"};

std::vector<std::string> section_keys(const std::string& stage) {
  std::vector<std::string> k = kSystemKeys;
  auto add = [&](std::initializer_list<const char*> more) { k.insert(k.end(), more.begin(), more.end()); };
  if (stage == "pairing") add({"seed"});
  else if (stage == "s-check") {}
  else if (stage == "rpf") add({"grid", "depth", "radius", "tol.residual", "tol.conformal"});
  else if (stage == "cones") add({"grid", "depth", "radius", "cone.", "seed"});
  else if (stage.rfind("spectral.", 0) == 0)
    add({"grid", "depth", "radius", "r0", "spectral.", "stability.", "tol.cov_hessian", "seed"});
  else if (stage == "simulate") add({"grid", "depth", "radius", "sim.", "seed", "tol.ks_ratio"});
  else add({"grid", "depth", "radius", "r0", "sim.", "h.", "mdp.", "coboundary.", "seed",
            "tol.mdp_band"});
  return k;
}

std::string cache_name(const RunConfig& cfg, const std::string& stage) {
  const std::string content =
      stage + "\n" + code_version() + "\n" + cfg.section(section_keys(stage));
  std::ostringstream s;
  s << stage << "-" << std::hex << std::hash<std::string>{}(content) << ".json";
  return s.str();
}

// Lazily built numerical objects shared by the stages of one run.
class Engine {
 public:
  explicit Engine(const RunConfig& cfg) : cfg_(cfg), sys_(build_system(cfg)) {}

  const RunConfig& cfg() const { return cfg_; }
  const SequentialSystem& system() const { return sys_; }
  const TransferContext& ctx() {
    if (!ctx_) ctx_ = std::make_unique<TransferContext>(sys_, cfg_.grid, cfg_.radius);
    return *ctx_;
  }
  const RpfSolver& solver() {
    if (!solver_) {
      RpfConfig rc;
      rc.depth = cfg_.depth;
      rc.residual_tolerance = cfg_.tol_residual;
      solver_ = std::make_unique<RpfSolver>(ctx(), rc);
    }
    return *solver_;
  }
  const GibbsFamily& family() {
    if (!family_) family_ = std::make_unique<GibbsFamily>(solver());
    return *family_;
  }
  const NormalizedTransfer& tilde() {
    if (!tilde_) tilde_ = std::make_unique<NormalizedTransfer>(family());
    return *tilde_;
  }
  std::size_t fiber_count() const {
    const std::size_t p = sys_.period() > 0 ? sys_.period() : sys_.horizon();
    return std::min<std::size_t>(p, 64);
  }

 private:
  const RunConfig& cfg_;
  SequentialSystem sys_;
  std::unique_ptr<TransferContext> ctx_;
  std::unique_ptr<RpfSolver> solver_;
  std::unique_ptr<GibbsFamily> family_;
  std::unique_ptr<NormalizedTransfer> tilde_;
};

Check make_check(const std::string& stage, const std::string& name, bool pass) {
  Check c;
  c.stage = stage;
  c.name = name;
  c.pass = pass;
  return c;
}

std::vector<double> unit(int d) {
  std::vector<double> e(static_cast<std::size_t>(d), 0.0);
  e[0] = 1.0;
  return e;
}

std::vector<Check> stage_pairing(Engine& e) {
  auto c = make_check("pairing", "verify_pairing", true);
  c.table.columns = {"fiber", "d", "q", "L_hat", "sigma_hat", "consistent"};
  double L = 0.0, sigma = INFINITY;
  for (std::size_t j = 0; j < e.fiber_count(); ++j) {
    const auto r = verify_pairing(e.system().map(static_cast<std::int64_t>(j)), 4096,
                                  derive_seed(e.cfg().seed, j));
    c.pass = c.pass && r.consistent;
    L = std::max(L, r.L_hat);
    sigma = std::min(sigma, r.sigma_hat);
    c.table.rows.push_back({static_cast<double>(j), static_cast<double>(r.d),
                            static_cast<double>(r.q), r.L_hat, r.sigma_hat,
                            r.consistent ? 1.0 : 0.0});
  }
  c.metrics = {{"L_hat", L}, {"sigma_hat", sigma}, {"fibers", double(e.fiber_count())}};
  return {c};
}

std::vector<Check> stage_s(Engine& e) {
  const auto r = compute_s(e.system());
  auto c = make_check("s-check", "compute_s", r.below_one);
  c.metrics = {{"s", r.s}};
  c.table.columns = {"fiber", "s_j"};
  for (std::size_t j = 0; j < r.per_fiber.size(); ++j)
    c.table.rows.push_back({static_cast<double>(j), r.per_fiber[j]});
  if (!r.below_one) c.note = "s >= 1: contraction hypothesis fails";
  return {c};
}

}  // namespace

void write_triplet(const RpfTriplet& t, double alpha, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream h(dir / "h.csv");
    write_grid_csv(h, t.h, alpha);
  }
  Table nu;
  nu.columns = {"x", "nu_re", "nu_im"};
  const Grid& grid = t.h.grid();
  for (std::size_t i = 0; i < t.nu.size(); ++i)
    nu.rows.push_back({grid.node(i), t.nu[i].real(), t.nu[i].imag()});
  write_csv(nu, dir / "nu.csv");
  nlohmann::json lj;
  lj["schema_version"] = kSchemaVersion;
  lj["fiber"] = t.fiber;
  lj["lambda_re"] = t.lambda.real();
  lj["lambda_im"] = t.lambda.imag();
  lj["log_scale"] = std::log(std::abs(t.lambda));
  std::ofstream l(dir / "lambda.json");
  l << lj.dump(2) << "\n";
}

namespace {

std::vector<Check> stage_rpf(Engine& e, const std::filesystem::path& out) {
  const auto& cfg = e.cfg();
  std::vector<Check> checks;
  const auto t = e.solver().solve(0, zero_param(e.ctx().dim()));
  write_triplet(t, cfg.alpha, out / "rpf");
  auto c = make_check("rpf", "triplet", t.eigen_residual <= cfg.tol_residual);
  c.metrics = {{"lambda", t.lambda.real()},
               {"eigen_residual", t.eigen_residual},
               {"adjoint_residual", t.adjoint_residual},
               {"normalization_error", t.normalization_error}};
  checks.push_back(c);

  const auto& fam = e.family();
  const auto sets = random_branch_intervals(e.system().map(0), 20, cfg.seed);
  const auto conf = check_conformal(fam, 0, sets);
  c = make_check("rpf", "conformal", conf.max_relative_residual <= cfg.tol_conformal);
  c.metrics = {{"max_relative_residual", conf.max_relative_residual}};
  c.table.columns = {"a", "b", "lhs", "rhs"};
  for (std::size_t i = 0; i < sets.size(); ++i)
    c.table.rows.push_back({sets[i].a, sets[i].b, conf.lhs[i], conf.rhs[i]});
  checks.push_back(c);

  const auto eq = equivariance_residual(fam, 0);
  c = make_check("rpf", "equivariance", true);
  c.hard = false;
  c.metrics = {{"weak", eq.weak}, {"kolmogorov", eq.kolmogorov},
               {"total_variation", eq.total_variation}};
  checks.push_back(c);

  const auto g = e.ctx().sample(0, [](double x) { return cplx(x, 0.0); });
  const auto ec = check_exp_convergence(e.solver(), 0, zero_param(e.ctx().dim()), g, 25);
  c = make_check("rpf", "exp_convergence", ec.fit.delta < 1.0 && ec.fit.r2 >= 0.95);
  c.metrics = {{"delta", ec.fit.delta}, {"r2", ec.fit.r2}};
  c.table.columns = {"n", "r_n"};
  for (std::size_t n = 0; n < ec.sequence.size(); ++n)
    c.table.rows.push_back({static_cast<double>(n), ec.sequence[n]});
  checks.push_back(c);

  const double mx = fam.expect(0, g);
  const auto dc = check_decay_correlations(
      fam, 0, [mx](double x) { return x - mx; }, [mx](double x) { return x - mx; }, 25);
  c = make_check("rpf", "decay_correlations", dc.fit.delta < 1.0 && dc.fit.r2 >= 0.9);
  c.metrics = {{"delta", dc.fit.delta}, {"r2", dc.fit.r2}};
  c.table.columns = {"n", "gap"};
  for (std::size_t n = 0; n < dc.sequence.size(); ++n)
    c.table.rows.push_back({static_cast<double>(n), dc.sequence[n]});
  checks.push_back(c);
  return checks;
}

std::vector<Check> stage_cones(Engine& e) {
  const auto& cfg = e.cfg();
  std::vector<Check> checks;
  ConeParams p = make_cone_params(e.system(), cfg.cone_delta, cfg.cone_kappa);
  if (cfg.cone_zeta > 0.0) p.zeta = cfg.cone_zeta;
  const auto& ctx = e.ctx();

  const auto inv = check_invariance(ctx, 0, p, cfg.cone_samples, derive_seed(cfg.seed, 1));
  auto c = make_check("cones", "invariance", inv.pass);
  c.metrics = {{"kappa", p.kappa}, {"zeta", p.zeta}, {"passed", double(inv.passed)},
               {"samples", double(inv.samples)}, {"worst_ratio", inv.worst_ratio}};
  checks.push_back(c);

  const auto S = sample_cone(p, ctx.grid(), 0, 500, derive_seed(cfg.seed, 2));
  const auto ap = check_aperture(p, S, 0);
  c = make_check("cones", "aperture", ap.passed == ap.samples);
  c.metrics = {{"passed", double(ap.passed)}, {"samples", double(ap.samples)},
               {"worst_ratio", ap.worst_ratio}};
  checks.push_back(c);

  {
    std::mt19937_64 rng(derive_seed(cfg.seed, 3));
    std::normal_distribution<double> N;
    std::size_t ok = 0;
    double worst = 0.0;
    const std::size_t count = 500;
    for (std::size_t k = 0; k < count; ++k) {
      const double a = N(rng), b = N(rng), cc = N(rng), w = 0.02 + 0.3 * std::abs(N(rng));
      const auto g = ctx.sample(0, [&](double x) {
        return cplx(a * std::cos(6 * x) + b * std::exp(-(x - 0.3) * (x - 0.3) / w) + cc * x, 0.0);
      });
      const auto d = cone_decompose(g, p);
      GridFunction sum(ctx.grid(), 0);
      for (const auto& q : d.parts) sum += q;
      const double err = (sum - g).sup_norm();
      if (d.members && d.norm_sum <= d.bound && err <= 1e-12 * (1.0 + g.sup_norm())) ++ok;
      worst = std::max(worst, d.norm_sum / d.bound);
    }
    c = make_check("cones", "decomposition", ok == count);
    c.metrics = {{"passed", double(ok)}, {"samples", double(count)}, {"worst_ratio", worst}};
    checks.push_back(c);
  }

  {
    const auto& fam = e.family();
    const int d = ctx.dim();
    std::vector<double> means(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) means[static_cast<std::size_t>(a)] = fam.expect(0, ctx.observable(0, a));
    const auto centered = e.system().with_observable([means](std::int64_t, const Fiber& f) {
      Observable u;
      for (std::size_t a = 0; a < f.observable.components.size(); ++a) {
        auto comp = f.observable.components[a];
        const double m = means[a];
        u.components.push_back([comp, m](double x) { return comp(x) - m; });
      }
      return u;
    });
    const TransferContext cctx(centered, cfg.grid, cfg.radius);
    const auto set = generating_set(cctx.grid(), p, cfg.cone_triples, derive_seed(cfg.seed, 4));
    std::vector<ZParam> zs;
    for (double r : {1e-1, 1e-2, 1e-3}) {
      ZParam z = zero_param(d);
      z[0] = r;
      zs.push_back(z);
    }
    const auto pr = check_perturbation(cctx, 0, p, zs, set, 10, derive_seed(cfg.seed, 5));
    c = make_check("cones", "perturbation", pr.spread <= 2.0);
    c.metrics = {{"spread", pr.spread}};
    c.table.columns = {"z_abs", "c_hat", "discarded"};
    for (const auto& r : pr.rows)
      c.table.rows.push_back({param_norm(r.z), r.c_hat, static_cast<double>(r.discarded)});
    checks.push_back(c);
  }

  const auto dm = estimate_diameter(ctx, 0, p, 50, derive_seed(cfg.seed, 6), cfg.cone_triples);
  c = make_check("cones", "diameter", dm.finite);
  c.metrics = {{"diameter", dm.diameter}};
  checks.push_back(c);
  return checks;
}

std::vector<Check> stage_pressure(Engine& e) {
  const auto& solver = e.solver();
  const int d = e.ctx().dim();
  std::vector<ZParam> stencil;
  for (double t : e.cfg().spectral_t)
    for (cplx dir : {cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)}) {
      ZParam z = zero_param(d);
      z[0] = t * dir;
      stencil.push_back(z);
    }
  const std::size_t n = 10, m = 7;
  const auto pb = pressure_block(solver, 0, n + m, stencil);
  double additivity = 0.0;
  for (const auto& z : stencil) {
    const cplx lhs = block_pressure(solver, 0, n + m, z);
    const cplx rhs = block_pressure(solver, 0, n, z) +
                     block_pressure(solver, static_cast<std::int64_t>(n), m, z);
    additivity = std::max(additivity, std::abs(lhs - rhs));
  }
  const double at_zero = std::abs(block_pressure(solver, 0, n + m, zero_param(d)));
  auto c = make_check("spectral", "pressure", additivity <= 1e-8 && at_zero <= 1e-12);
  c.metrics = {{"additivity", additivity}, {"pressure_at_zero", at_zero},
               {"gradient_0", pb.gradient[0]}, {"hessian_00", pb.hessian[0]}};
  c.table.columns = {"z_re", "z_im", "pi_re", "pi_im"};
  for (std::size_t i = 0; i < stencil.size(); ++i)
    c.table.rows.push_back({stencil[i][0].real(), stencil[i][0].imag(), pb.values[i].real(),
                            pb.values[i].imag()});
  return {c};
}

std::vector<Check> stage_variance(Engine& e) {
  const auto& cfg = e.cfg();
  std::vector<std::size_t> ns;
  for (std::size_t n = 1; n <= cfg.spectral_n_max; ++n) ns.push_back(n);
  const auto ch = check_cov_hessian(e.family(), 0, ns);
  // |Cov − Hessian| is bounded uniformly in n, not small: the limit is
  // 2Σ k·c_k for a stationary sequence.  Fail when it still grows.
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i)
    (2 * ns[i] <= ns.back() ? early : late) =
        std::max(2 * ns[i] <= ns.back() ? early : late, ch.difference[i]);
  const double growth = late - early;
  auto c = make_check("spectral", "cov_hessian", growth <= cfg.tol_cov_hessian);
  c.metrics = {{"max_difference", ch.max_difference},
               {"growth", growth},
               {"variance_per_n", ch.variance.back() / static_cast<double>(ns.back())}};
  c.table.columns = {"n", "variance", "hessian", "difference"};
  for (std::size_t i = 0; i < ns.size(); ++i)
    c.table.rows.push_back({static_cast<double>(ns[i]), ch.variance[i], ch.hessian[i],
                            ch.difference[i]});
  std::vector<Check> checks{c};

  const int d = e.ctx().dim();
  std::vector<std::vector<double>> dirs;
  for (int a = 0; a < d; ++a) {
    auto v = std::vector<double>(static_cast<std::size_t>(d), 0.0);
    v[static_cast<std::size_t>(a)] = 1.0;
    dirs.push_back(v);
  }
  std::vector<std::int64_t> js;
  for (std::size_t j = 0; j < std::min<std::size_t>(e.fiber_count(), 4); ++j)
    js.push_back(static_cast<std::int64_t>(j));
  const auto vg = variance_growth_check(e.family(), js, cfg.spectral_n_max, dirs, 0.0);
  c = make_check("spectral", "variance_growth", vg.min_ratio > 0.0);
  c.hard = false;
  c.metrics = {{"min_ratio", vg.min_ratio}, {"min_eigen_ratio", vg.min_eigen_ratio}};
  checks.push_back(c);
  return checks;
}

std::vector<Check> stage_norm_decay(Engine& e) {
  const auto& cfg = e.cfg();
  NormDecayOptions opt;
  opt.n_max = cfg.spectral_norm_n_max;
  opt.n_stride = std::max<std::size_t>(1, cfg.spectral_norm_n_max / 5);
  opt.seed = derive_seed(cfg.seed, 7);
  const auto nd = norm_decay_scan(e.tilde(), 0, cfg.spectral_t, opt);
  bool pass = nd.uniform_bound <= 10.0;
  double worst_scaling = 0.0;
  for (const auto& r : nd.rows) pass = pass && r.fit.slope < 0.0 && r.bounded;
  for (std::size_t i = 0; i < nd.rows.size(); ++i)
    for (std::size_t k = 0; k < nd.rows.size(); ++k)
      if (std::abs(nd.rows[k].t - 2.0 * nd.rows[i].t) < 1e-12) {
        const double ratio = nd.rows[k].fit.slope / nd.rows[i].fit.slope;
        worst_scaling = std::max(worst_scaling, std::abs(std::log(ratio / 4.0)));
        pass = pass && ratio >= 2.0 && ratio <= 8.0;
      }
  auto c = make_check("spectral", "norm_decay", pass);
  c.metrics = {{"uniform_bound", nd.uniform_bound}, {"worst_log_scaling", worst_scaling}};
  c.table.columns = {"t", "n", "norm"};
  for (const auto& r : nd.rows)
    for (std::size_t i = 0; i < r.n.size(); ++i)
      c.table.rows.push_back({r.t, static_cast<double>(r.n[i]), r.norm[i]});
  for (const auto& r : nd.rows) {
    c.metrics["slope_t" + std::to_string(r.t).substr(0, 4)] = r.fit.slope;
    c.metrics["c_t" + std::to_string(r.t).substr(0, 4)] = r.c;
  }
  return {c};
}

std::vector<Check> stage_stability(Engine& e) {
  const auto& cfg = e.cfg();
  auto c = make_check("spectral", "stability", true);
  if (cfg.map_family != "mp" || cfg.seq_driving_angle != 0.0 || cfg.stability_dbeta.empty()) {
    c.hard = false;
    c.note = "beta sweep applies to the homogeneous mp family only; skipped";
    return {c};
  }
  StabilityOptions opt;
  opt.r0 = cfg.r0;
  opt.seed = derive_seed(cfg.seed, 8);
  c.table.columns = {"dbeta", "eps_hat", "sup_ratio"};
  double prev = INFINITY;
  for (double db : cfg.stability_dbeta) {
    RunConfig pc = cfg;
    pc.map_beta = cfg.map_beta + db;
    const auto psys = build_system(pc);
    const TransferContext pctx(psys, cfg.grid, cfg.radius);
    RpfConfig rc;
    rc.depth = cfg.depth;
    rc.residual_tolerance = cfg.tol_residual;
    const RpfSolver ps(pctx, rc);
    const GibbsFamily pf(ps);
    const auto st = stability_scan(e.family(), pf, opt);
    c.table.rows.push_back({db, st.eps_hat, st.sup_ratio});
    c.pass = c.pass && st.sup_ratio < prev;
    prev = st.sup_ratio;
  }
  c.metrics = {{"steps", double(cfg.stability_dbeta.size())}};
  return {c};
}

SimMethod sim_method(const RunConfig& cfg) {
  if (cfg.sim_method == "forward") return SimMethod::Forward;
  if (cfg.sim_method == "reverse") return SimMethod::Reverse;
  return SimMethod::Auto;
}

std::vector<Check> stage_simulate(Engine& e) {
  const auto& cfg = e.cfg();
  const auto& fam = e.family();
  const int d = e.ctx().dim();
  const auto dir = unit(d);
  SimConfig sc;
  sc.replicas = cfg.sim_replicas;
  sc.rungs = cfg.sim_rungs;
  sc.seed = derive_seed(cfg.seed, 9);
  sc.direction = dir;
  sc.method = sim_method(cfg);
  const bool forward = sc.method == SimMethod::Forward ||
                       (sc.method == SimMethod::Auto && forward_orbits_valid(fam, 0));
  const auto sums = forward ? birkhoff_sums(e.system(),
                                            sample_initial(fam, 0, sc.replicas, derive_seed(cfg.seed, 10)), sc)
                            : reverse_chain_sums(fam, e.system(), sc);
  std::vector<std::vector<double>> centre;
  for (auto n : sc.rungs) centre.push_back(quadrature_mean(fam, 0, n));
  const auto be = clt_berry_esseen(sums, dir, centre, 1e-3, cfg.tol_ks_ratio);

  std::vector<Check> checks;
  auto c = make_check("simulate", "berry_esseen", be.pass);
  c.note = be.verdict;
  c.metrics = {{"ks_ratio", be.ks_ratio},
               {"improving", be.improving ? 1.0 : 0.0},
               {"forward_orbits", forward ? 1.0 : 0.0}};
  c.table.columns = {"n", "ks", "ks_sqrt_n", "var", "exceed_0.2", "exceed_0.5"};
  for (const auto& r : be.rungs)
    c.table.rows.push_back({static_cast<double>(r.n), r.ks, r.ks_sqrt_n, r.variance, r.exceed_02,
                            r.exceed_05});
  checks.push_back(c);

  // Centering and variance against quadrature.
  const auto cov = covariance_curve(fam, 0, sc.rungs.back());
  bool centred = true;
  double worst_z = 0.0;
  Table t;
  t.columns = {"n", "mean", "quadrature_mean", "z", "var_per_n", "quadrature_var_per_n"};
  for (std::size_t r = 0; r < sc.rungs.size(); ++r) {
    const auto x = sums.project(r, dir);
    const double m = mean(x), v = variance(x);
    const double q = centre[r][0];
    const double se = std::sqrt(v / static_cast<double>(x.size()));
    const double z = se > 0.0 ? std::abs(m - q) / se : (std::abs(m - q) > 1e-9 ? INFINITY : 0.0);
    worst_z = std::max(worst_z, z);
    centred = centred && z <= 3.0;
    const double n = static_cast<double>(sc.rungs[r]);
    t.rows.push_back({n, m, q, z, v / n, cov.var(sc.rungs[r], dir) / n});
  }
  c = make_check("simulate", "centering", centred);
  c.metrics = {{"worst_z", worst_z}};
  c.table = t;
  checks.push_back(c);

  const double vq = cov.var(sc.rungs.back(), dir);
  const double ve = be.rungs.back().variance;
  const double rel = vq > 0.0 ? std::abs(ve - vq) / vq : (ve < 1e-12 ? 0.0 : INFINITY);
  c = make_check("simulate", "variance_consistency", rel <= 0.05);
  c.metrics = {{"empirical", ve}, {"quadrature", vq}, {"relative_difference", rel}};
  checks.push_back(c);

  const auto lil = lil_envelope(sums.project(sc.rungs.size() - 1, dir), centre.back()[0],
                                sc.rungs.back(), vq / static_cast<double>(sc.rungs.back()));
  c = make_check("simulate", "lil_envelope", lil.pass);
  if (lil.degenerate) c.note = "degenerate";
  for (const auto& r : lil.rows) c.metrics["exceed_" + std::to_string(r.eta).substr(0, 3)] = r.fraction;
  checks.push_back(c);
  return checks;
}

std::vector<Check> stage_limit_tests(Engine& e) {
  const auto& cfg = e.cfg();
  const auto& fam = e.family();
  const int d = e.ctx().dim();
  const auto dir = unit(d);
  std::vector<Check> checks;

  HBlocks hb;
  std::vector<std::vector<double>> tv(2, dir);
  for (auto& v : tv)
    for (auto& x : v) x *= cfg.h_t;
  const auto H = condition_H_gap(e.tilde(), hb, tv, cfg.h_k_max, cfg.r0);
  auto c = make_check("limit-tests", "condition_H",
                      H.gap.back() <= 1e-6 && std::log(H.fit.delta) < 0.0);
  c.metrics = {{"gap_last", H.gap.back()}, {"delta", H.fit.delta}, {"r2", H.fit.r2},
               {"below_floor_at", double(H.below_floor_at)}};
  c.table.columns = {"k", "gap", "joint_re", "joint_im", "product_re", "product_im"};
  for (std::size_t i = 0; i < H.k.size(); ++i)
    c.table.rows.push_back({static_cast<double>(H.k[i]), H.gap[i], H.joint[i].real(),
                            H.joint[i].imag(), H.product[i].real(), H.product[i].imag()});
  checks.push_back(c);

  SimConfig sc;
  sc.replicas = cfg.sim_replicas;
  sc.rungs = cfg.sim_rungs;
  sc.seed = derive_seed(cfg.seed, 11);
  sc.method = sim_method(cfg);
  std::vector<std::vector<double>> tmc(2, dir);
  for (auto& v : tmc)
    for (auto& x : v) x *= cfg.r0;
  const auto hm = condition_H_monte_carlo(e.tilde(), hb, tmc, 2, sc);
  c = make_check("limit-tests", "condition_H_monte_carlo", hm.pass);
  c.metrics = {{"z_joint", hm.z_joint}, {"z_first", hm.z_first}, {"z_second", hm.z_second}};
  checks.push_back(c);

  MdpOptions mo;
  mo.gamma = cfg.mdp_gamma;
  mo.x = cfg.mdp_x;
  mo.n = cfg.sim_rungs.back();
  mo.replicas = cfg.mdp_replicas;
  mo.band = cfg.tol_mdp_band;
  mo.seed = derive_seed(cfg.seed, 12);
  auto mdp_table = [](const MdpReport& r) {
    Table t;
    t.columns = {"x", "probability", "std_error", "rate", "target", "relative_error", "hits",
                 "insufficient"};
    for (const auto& row : r.rows)
      t.rows.push_back({row.x, row.probability, row.std_error, row.rate, row.target,
                        row.relative_error, static_cast<double>(row.hits),
                        row.insufficient ? 1.0 : 0.0});
    return t;
  };
  const auto gc = mdp_gaussian_control(mo);
  c = make_check("limit-tests", "mdp_gaussian_control", gc.pass);
  c.table = mdp_table(gc);
  checks.push_back(c);

  const auto cov = covariance_curve(fam, 0, mo.n);
  const double s2 = cov.var(mo.n, dir) / static_cast<double>(mo.n);
  const auto md = mdp_check(fam, 0, mo, s2, dir);
  c = make_check("limit-tests", "mdp", md.pass);
  c.metrics = {{"b_n", md.b_n}, {"sigma", md.sigma}};
  c.table = mdp_table(md);
  checks.push_back(c);

  sc.seed = derive_seed(cfg.seed, 13);
  sc.direction = dir;
  const auto cb = coboundary_control(fam, named_function(cfg.coboundary_r), sc);
  c = make_check("limit-tests", "coboundary", cb.pass);
  c.metrics = {{"var_r", cb.var_r}, {"slope_coboundary", cb.slope_coboundary},
               {"slope_generic", cb.slope_generic}};
  c.table.columns = {"n", "var_coboundary", "var_generic"};
  for (std::size_t i = 0; i < cb.rungs.size(); ++i)
    c.table.rows.push_back(
        {static_cast<double>(cb.rungs[i]), cb.var_coboundary[i], cb.var_generic[i]});
  checks.push_back(c);
  return checks;
}

std::vector<Check> run_stage(Engine& e, const std::string& stage,
                             const std::filesystem::path& out) {
  if (stage == "pairing") return stage_pairing(e);
  if (stage == "s-check") return stage_s(e);
  if (stage == "rpf") return stage_rpf(e, out);
  if (stage == "cones") return stage_cones(e);
  if (stage == "spectral.pressure") return stage_pressure(e);
  if (stage == "spectral.variance") return stage_variance(e);
  if (stage == "spectral.norm-decay") return stage_norm_decay(e);
  if (stage == "spectral.stability") return stage_stability(e);
  if (stage == "simulate") return stage_simulate(e);
  if (stage == "limit-tests") return stage_limit_tests(e);
  throw ConfigError("unknown stage '" + stage + "'");
}

}  // namespace

PipelineRun run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages,
                         const PipelineOptions& opt) {
  cfg.validate();
  const auto order = expand_stages(stages);
  PipelineRun run;
  Engine engine(cfg);
  const auto cache_dir = opt.out / "cache";
  std::filesystem::create_directories(cache_dir);

  for (const auto& stage : order) {
    const auto cache_file = cache_dir / cache_name(cfg, stage);
    std::vector<Check> checks;
    bool cached = false;
    if (opt.use_cache && !opt.force && std::filesystem::exists(cache_file)) {
      try {
        std::ifstream in(cache_file);
        const auto j = nlohmann::json::parse(in);
        for (const auto& cj : j.at("checks")) checks.push_back(check_from_json(cj));
        cached = true;
      } catch (const std::exception&) {
        checks.clear();  // unreadable cache entry: recompute
      }
    }
    if (!cached) {
      try {
        checks = run_stage(engine, stage, opt.out);
      } catch (const NumericError& ex) {
        run.results.failed_stage = stage;
        run.results.error = ex.what();
        break;
      } catch (const ParameterError& ex) {
        auto c = make_check(stage, "hypotheses", false);
        c.note = ex.what();
        checks = {c};
      }
      run.computed.push_back(stage);
      if (opt.use_cache) {
        nlohmann::json j;
        j["schema_version"] = kSchemaVersion;
        j["stage"] = stage;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : checks) arr.push_back(to_json(c));
        j["checks"] = arr;
        std::ofstream f(cache_file);
        f << j.dump(2) << "\n";
      }
    }
    bool failed = false;
    for (auto& c : checks) {
      failed = failed || (c.hard && !c.pass);
      run.results.checks.push_back(std::move(c));
    }
    if (failed) {
      run.results.failed_stage = stage;
      break;
    }
  }
  emit_report(run.results, opt.out);
  run.exit_code = exit_code(run.results);
  return run;
}

}  // namespace seqtx
