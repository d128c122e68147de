#include <doctest.h>

#include <cmath>
#include <numbers>

#include "seqtx/errors.hpp"
#include "seqtx/montecarlo.hpp"
#include "seqtx/parallel.hpp"

using namespace seqtx;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct Setup {
  TransferContext ctx;
  RpfSolver solver;
  GibbsFamily fam;
  NormalizedTransfer tilde;
  Setup(SequentialSystem sys, std::size_t cells)
      : ctx(std::move(sys), cells), solver(ctx, [] {
          RpfConfig rc;
          rc.depth = 40;
          return rc;
        }()),
        fam(solver), tilde(fam) {}
};

SequentialSystem doubling(ScalarFn u) {
  return make_homogeneous(make_linear_expanding(2), nullptr, Observable::scalar(std::move(u)));
}
ScalarFn cosine() {
  return [](double x) { return std::cos(kTau * x); };
}

}  // namespace

TEST_CASE("sample_initial") {
  Setup s(doubling(cosine()), 1024);
  auto x = sample_initial(s.fam, 0, 100000, 7);
  CHECK(ks_uniform(x) <= 1.36 / std::sqrt(1e5));
  CHECK(sample_initial(s.fam, 0, 1, 3) == sample_initial(s.fam, 0, 1, 3));

  Setup m(make_homogeneous(make_mp_map(0.5), nullptr, Observable::scalar([](double x) { return x; })),
          2048);
  const auto y = sample_initial(m.fam, 0, 50000, 9);
  const double q = m.fam.expect(0, m.ctx.sample(0, [](double x) { return cplx(x, 0); }));
  CHECK(std::abs(mean(y) - q) <= 3.0 * std::sqrt(variance(y) / y.size()));
}

TEST_CASE("birkhoff sums") {
  Setup one(doubling([](double) { return 1.0; }), 256);
  SimConfig cfg;
  cfg.replicas = 50;
  cfg.rungs = {0, 10, 100};
  const auto x = sample_initial(one.fam, 0, cfg.replicas, 1);
  const auto s = birkhoff_sums(one.ctx.system(), x, cfg);
  for (std::size_t i = 0; i < cfg.replicas; ++i) {
    CHECK(s.sums[0][i] == 0.0);
    CHECK(s.sums[1][i] == 10.0);
    CHECK(s.sums[2][i] == 100.0);
  }

  Setup c(doubling(cosine()), 1024);
  cfg.replicas = 20000;
  cfg.rungs = {1024};
  const auto y = sample_initial(c.fam, 0, cfg.replicas, 2);
  const auto sc = birkhoff_sums(c.ctx.system(), y, cfg);
  CHECK(variance(sc.project(0, {})) / 1024 == doctest::Approx(0.5).epsilon(0.05));

  cfg.rungs = {10, 5};
  CHECK_THROWS_AS(birkhoff_sums(c.ctx.system(), y, cfg), ParameterError);
}

TEST_CASE("reversed Gibbs chain") {
  Setup d(doubling(cosine()), 1024);
  CHECK(forward_orbits_valid(d.fam, 0));
  SimConfig cfg;
  cfg.replicas = 20000;
  cfg.rungs = {0, 64, 256};
  const auto s = reverse_chain_sums(d.fam, d.ctx.system(), cfg);
  for (double v : s.sums[0]) CHECK(v == 0.0);
  CHECK(variance(s.project(2, std::vector<double>{1.0})) / 256.0 == doctest::Approx(0.5).epsilon(0.05));

  // φ = 0 on MP: μ is singular, forward orbits cannot reach it.
  Setup m(make_homogeneous(make_mp_map(0.5), nullptr, Observable::scalar([](double x) { return x; })),
          2048);
  CHECK_FALSE(forward_orbits_valid(m.fam, 0));
  cfg.rungs = {16};
  const auto sm = reverse_chain_sums(m.fam, m.ctx.system(), cfg);
  const auto v = sm.project(0, std::vector<double>{1.0});
  const double q = quadrature_mean(m.fam, 0, 16)[0];
  CHECK(std::abs(mean(v) - q) <= 4.0 * std::sqrt(variance(v) / v.size()));
}

TEST_CASE("results do not depend on the worker count") {
  Setup c(doubling(cosine()), 512);
  SimConfig cfg;
  cfg.replicas = 3000;
  cfg.rungs = {64, 256};
  set_worker_count(1);
  const auto a = birkhoff_sums(c.ctx.system(), sample_initial(c.fam, 0, cfg.replicas, 5), cfg);
  set_worker_count(3);
  const auto b = birkhoff_sums(c.ctx.system(), sample_initial(c.fam, 0, cfg.replicas, 5), cfg);
  set_worker_count(0);
  CHECK(a.sums == b.sums);
}

TEST_CASE("berry-esseen verdicts") {
  SimConfig cfg;
  cfg.replicas = 20000;
  const auto g = gaussian_control_sums(cfg);
  const auto rep = clt_berry_esseen(g, {}, {});
  CHECK(rep.within_noise);
  CHECK_FALSE(rep.degenerate);

  Setup b(doubling([](double x) { return std::cos(2 * kTau * x) - std::cos(kTau * x); }), 1024);
  cfg.replicas = 2000;
  cfg.rungs = {256, 4096};
  const auto sums = birkhoff_sums(b.ctx.system(), sample_initial(b.fam, 0, cfg.replicas, 3), cfg);
  const auto cb = clt_berry_esseen(sums, {}, {});
  CHECK(cb.degenerate);
  CHECK_FALSE(cb.pass);
}

TEST_CASE("lil envelope") {
  SimConfig cfg;
  cfg.replicas = 10000;
  cfg.rungs = {4096};
  const auto g = gaussian_control_sums(cfg);
  const auto r = lil_envelope(g.sums[0], 0.0, 4096, 1.0);
  CHECK(r.pass);
  CHECK(r.rows.back().fraction < 0.05);
  const auto d = lil_envelope(g.sums[0], 0.0, 4096, 0.0);
  CHECK(d.degenerate);
  CHECK_FALSE(d.pass);
}

TEST_CASE("condition (H)") {
  Setup c(doubling(cosine()), 2048);
  HBlocks single;
  single.first = {1};
  single.second = {1};
  const std::vector<std::vector<double>> t0{{0.0}, {0.0}};
  const auto z = condition_H_gap(c.tilde, single, t0, 3, 0.2);
  for (double v : z.gap) CHECK(v <= 1e-14);

  Setup zero(doubling([](double) { return 0.0; }), 512);
  const std::vector<std::vector<double>> t1{{0.1}, {0.1}};
  const auto zz = condition_H_gap(zero.tilde, HBlocks{}, t1, 10, 0.2);
  for (double v : zz.gap) CHECK(v <= 1e-14);

  const auto h = condition_H_gap(c.tilde, HBlocks{}, t1, 30, 0.2);
  CHECK(h.gap.back() <= 1e-6);
  CHECK(h.fit.delta < 1.0);

  SimConfig cfg;
  cfg.replicas = 20000;
  const std::vector<std::vector<double>> tm{{0.2}, {0.2}};
  const auto mc = condition_H_monte_carlo(c.tilde, HBlocks{}, tm, 2, cfg);
  CHECK(mc.pass);
}

TEST_CASE("moderate deviations") {
  MdpOptions opt;
  opt.replicas = 20000;
  opt.n = 1024;
  opt.x = {1.0, 0.5, 0.01};
  const auto g = mdp_gaussian_control(opt);
  REQUIRE(g.rows.size() == 3);
  CHECK(g.rows[0].within);
  CHECK(g.rows[0].rate < g.rows[1].rate);
  CHECK(g.rows[1].rate < g.rows[2].rate);
  // at x = 0 the tail is 1/2, so the finite-n rate tends to (n/b_n²) log(1/2)
  const double n = 1024.0, b = std::pow(n, opt.gamma);
  CHECK(g.rows[2].rate == doctest::Approx(n / (b * b) * std::log(0.5)).epsilon(0.1));
}

TEST_CASE("coboundary control") {
  Setup c(doubling(cosine()), 1024);
  SimConfig cfg;
  cfg.replicas = 2000;
  cfg.rungs = {64, 256, 1024};
  const auto zero = coboundary_control(c.fam, [](double) { return 0.0; }, cfg);
  for (double v : zero.var_coboundary) CHECK(v == 0.0);
  const auto r = coboundary_control(c.fam, cosine(), cfg);
  CHECK(r.bounded);
  CHECK(r.slope_generic == doctest::Approx(0.5).epsilon(0.15));
  CHECK(r.pass);
}
