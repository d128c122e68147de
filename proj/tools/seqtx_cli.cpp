// seqtx: command-line front end for the sequential transfer-operator toolkit.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "seqtx/errors.hpp"
#include "seqtx/parallel.hpp"
#include "seqtx/pipeline.hpp"
#include "seqtx/transfer.hpp"

namespace {

using namespace seqtx;

struct Globals {
  std::string config;
  std::string out = "out";
  std::vector<std::string> set;
  std::uint64_t seed = 0;
  std::size_t grid = 0;
  std::size_t threads = 0;
  bool force = false;
  bool json = false;
};

RunConfig load_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config.empty()) cfg = RunConfig::load(g.config);
  for (const auto& kv : g.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed != 0) cfg.seed = g.seed;
  if (g.grid != 0) cfg.grid = g.grid;
  cfg.validate();
  return cfg;
}

std::string flat(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// key=value lines on stdout, or the JSON summary with --json.
void print(const Results& r, bool json) {
  if (json) {
    std::cout << summary_json(r).dump(2) << "\n";
    return;
  }
  for (const auto& c : r.checks) {
    const std::string p = c.stage + "." + c.name + ".";
    std::cout << p << "pass=" << (c.pass ? 1 : 0) << "\n";
    for (const auto& [k, v] : c.metrics) std::cout << p << k << "=" << flat(v) << "\n";
    if (!c.note.empty()) std::cout << p << "note=" << c.note << "\n";
  }
  if (!r.error.empty()) std::cout << "error=" << r.error << "\n";
  std::cout << "overall=" << (r.pass() ? "pass" : "fail") << "\n";
}

int run_stages(const Globals& g, const RunConfig& cfg, const std::vector<std::string>& stages) {
  PipelineOptions opt;
  opt.out = g.out;
  opt.force = g.force;
  const auto run = run_pipeline(cfg, stages, opt);
  for (const auto& s : run.computed) std::cerr << "computed " << s << "\n";
  print(run.results, g.json);
  return run.exit_code;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential transfer operators: RPF triplets, cones, spectral scans and limit tests"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key=value config file");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--set", g.set, "override a config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--grid", g.grid, "override the grid size N");
  app.add_option("--threads", g.threads, "worker threads (0: hardware default)");
  app.add_flag("--force", g.force, "ignore cached stage results");
  app.add_flag("--json", g.json, "print the JSON summary instead of key=value lines");

  auto* pairing = app.add_subcommand("verify-pairing", "check the declared pairing data (d, q, L, sigma)");
  auto* checks = app.add_subcommand("check-s", "compute the contraction constant s");

  auto* rpf = app.add_subcommand("rpf", "RPF triplets");
  rpf->require_subcommand(1);
  auto* solve = rpf->add_subcommand("solve", "solve (lambda, h, nu) on one fiber");
  std::int64_t fiber = 0;
  double z_re = 0.0, z_im = 0.0;
  std::size_t depth = 0;
  solve->add_option("--fiber", fiber);
  solve->add_option("--z-re", z_re);
  solve->add_option("--z-im", z_im);
  solve->add_option("--depth", depth);

  auto* cones = app.add_subcommand("cones", "cone checks");
  cones->require_subcommand(1);
  auto* verify = cones->add_subcommand("verify", "invariance, aperture, decomposition, perturbation, diameter");
  double kappa = -1.0, zeta = -1.0;
  std::size_t samples = 0, triples = 0;
  verify->add_option("--kappa", kappa);
  verify->add_option("--zeta", zeta);
  verify->add_option("--samples", samples);
  verify->add_option("--triples", triples);

  auto* spectral = app.add_subcommand("spectral", "pressure and variance scans");
  spectral->require_subcommand(1);
  auto* pressure = spectral->add_subcommand("pressure", "block pressure and additivity");
  auto* variance = spectral->add_subcommand("variance", "covariance against the pressure Hessian");
  auto* norm_decay = spectral->add_subcommand("norm-decay", "norm decay of the twisted operators");
  auto* stability = spectral->add_subcommand("stability", "covariance stability under a beta sweep");

  auto* simulate = app.add_subcommand("simulate", "trajectory simulation: CLT, Berry-Esseen, LIL");
  std::size_t replicas = 0;
  std::string rungs;
  simulate->add_option("--replicas", replicas);
  simulate->add_option("--rungs", rungs, "comma-separated horizons");
  auto* limits = app.add_subcommand("limit-tests", "condition (H), moderate deviations, coboundary control");

  auto* pipeline = app.add_subcommand("pipeline", "run stages in dependency order");
  std::string stage_list = "default";
  pipeline->add_option("--stages", stage_list,
                       "comma-separated stages, 'default', 'all' or '' to validate only");

  auto* transfer = app.add_subcommand("transfer", "single operator applications");
  transfer->require_subcommand(1);
  auto* apply = transfer->add_subcommand("apply", "apply L_z on one fiber to a grid function file");
  std::string in_file, out_file;
  apply->add_option("--in", in_file)->required();
  apply->add_option("--to", out_file, "output file")->required();
  apply->add_option("--fiber", fiber);
  apply->add_option("--z-re", z_re);
  apply->add_option("--z-im", z_im);

  auto* show = app.add_subcommand("show-config", "print the canonical config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g.threads > 0) set_worker_count(g.threads);
    RunConfig cfg = load_config(g);

    if (*show) {
      std::cout << cfg.to_text();
      return 0;
    }
    if (*pairing) return run_stages(g, cfg, {"pairing"});
    if (*checks) return run_stages(g, cfg, {"s-check"});
    if (*solve) {
      if (depth > 0) cfg.depth = depth;
      cfg.validate();
      const auto sys = build_system(cfg);
      const TransferContext ctx(sys, cfg.grid, cfg.radius);
      RpfConfig rc;
      rc.depth = cfg.depth;
      rc.residual_tolerance = cfg.tol_residual;
      const RpfSolver solver(ctx, rc);
      ZParam z = zero_param(ctx.dim());
      z[0] = {z_re, z_im};
      const auto t = solver.solve(fiber, z);
      write_triplet(t, cfg.alpha, std::filesystem::path(g.out) / "rpf");
      Results r;
      Check c;
      c.stage = "rpf";
      c.name = "solve";
      c.pass = t.eigen_residual <= cfg.tol_residual;
      c.metrics = {{"fiber", double(fiber)},
                   {"lambda_re", t.lambda.real()},
                   {"lambda_im", t.lambda.imag()},
                   {"eigen_residual", t.eigen_residual},
                   {"adjoint_residual", t.adjoint_residual}};
      r.checks.push_back(c);
      emit_report(r, g.out);
      print(r, g.json);
      return exit_code(r);
    }
    if (*verify) {
      if (kappa >= 0.0) cfg.cone_kappa = kappa;
      if (zeta >= 0.0) cfg.cone_zeta = zeta;
      if (samples > 0) cfg.cone_samples = samples;
      if (triples > 0) cfg.cone_triples = triples;
      cfg.validate();
      return run_stages(g, cfg, {"cones"});
    }
    if (*pressure) return run_stages(g, cfg, {"spectral.pressure"});
    if (*variance) return run_stages(g, cfg, {"spectral.variance"});
    if (*norm_decay) return run_stages(g, cfg, {"spectral.norm-decay"});
    if (*stability) return run_stages(g, cfg, {"spectral.stability"});
    if (*simulate) {
      if (replicas > 0) cfg.sim_replicas = replicas;
      if (!rungs.empty()) cfg.set("sim.rungs", rungs);
      cfg.validate();
      return run_stages(g, cfg, {"simulate"});
    }
    if (*limits) return run_stages(g, cfg, {"limit-tests"});
    if (*pipeline) {
      std::vector<std::string> stages;
      if (stage_list == "default") stages = default_stages();
      else if (stage_list == "all") stages = {"pairing", "s-check", "rpf", "cones", "spectral",
                                              "simulate", "limit-tests"};
      else stages = split(stage_list);
      return run_stages(g, cfg, stages);
    }
    if (*apply) {
      std::ifstream in(in_file);
      if (!in) throw ConfigError("cannot open " + in_file);
      double alpha = cfg.alpha;
      GridFunction f = read_grid_csv(in, &alpha);
      const auto sys = build_system(cfg.alpha == alpha ? cfg : [&] {
        RunConfig c2 = cfg;
        c2.alpha = alpha;
        return c2;
      }());
      const TransferContext ctx(sys, f.grid().cells(), cfg.radius);
      ZParam z = zero_param(ctx.dim());
      z[0] = {z_re, z_im};
      f.set_fiber(fiber);
      const auto out = ctx.apply(fiber, z, f);
      std::ofstream o(out_file);
      if (!o) throw ConfigError("cannot write " + out_file);
      write_grid_csv(o, out, alpha);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
