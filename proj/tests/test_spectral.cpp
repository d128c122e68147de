#include <doctest.h>

#include <cmath>
#include <numbers>

#include "seqtx/spectral.hpp"

using namespace seqtx;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;
ScalarFn cosine() {
  return [](double x) { return std::cos(kTau * x); };
}

struct Setup {
  TransferContext ctx;
  RpfSolver solver;
  GibbsFamily fam;
  Setup(SequentialSystem sys, std::size_t cells, std::size_t depth = 30)
      : ctx(std::move(sys), cells), solver(ctx, [depth] {
          RpfConfig rc;
          rc.depth = depth;
          return rc;
        }()),
        fam(solver) {}
};

SequentialSystem doubling(Observable u) {
  return make_homogeneous(make_linear_expanding(2), nullptr, std::move(u));
}

}  // namespace

TEST_CASE("pressure") {
  Setup s(doubling(Observable::scalar(cosine())), 1024);
  CHECK(std::abs(block_pressure(s.solver, 0, 10, zero_param(1))) <= 1e-12);
  for (cplx z : {cplx(0.1, 0), cplx(0, 0.1), cplx(0.05, -0.1)}) {
    const auto zp = scalar_param(z);
    const cplx all = block_pressure(s.solver, 0, 10, zp);
    const cplx split = block_pressure(s.solver, 0, 5, zp) + block_pressure(s.solver, 5, 5, zp);
    CHECK(std::abs(all - split) <= 1e-8);
  }
  const std::vector<ZParam> stencil{scalar_param(0.01), scalar_param(-0.01)};
  const auto pb = pressure_block(s.solver, 0, 8, stencil);
  CHECK(std::abs(pb.gradient[0]) <= 1e-8);
  CHECK(pb.hessian[0] == doctest::Approx(8 * 0.5).epsilon(1e-3));
  // Π_{0,n}(t) ≈ n σ² t² / 2
  CHECK(pb.values[0].real() == doctest::Approx(8 * 0.5 * 1e-4 / 2).epsilon(1e-2));
}

TEST_CASE("covariance curve") {
  Setup zero(doubling(Observable::zero()), 512);
  const auto c0 = covariance_curve(zero.fam, 0, 20);
  for (const auto& m : c0.cov) CHECK(std::abs(m[0]) <= 1e-14);

  Setup s(doubling(Observable::scalar(cosine())), 4096);
  const auto c = covariance_curve(s.fam, 0, 200);
  for (std::size_t n = 1; n <= 200; n += 13) CHECK(std::abs(c.var(n) - 0.5 * n) <= 1e-6 * n);

  // u = r∘T − r, r = cos 2πx
  const auto cob = doubling(Observable::scalar([](double x) {
    return std::cos(2 * kTau * x) - std::cos(kTau * x);
  }));
  Setup b(cob, 4096);
  const auto cb = covariance_curve(b.fam, 0, 200);
  for (std::size_t n = 1; n <= 200; ++n) REQUIRE(cb.var(n) <= 4 * 0.5 + 1e-6);
}

TEST_CASE("covariance against the pressure hessian") {
  Setup s(doubling(Observable::scalar(cosine())), 4096);
  std::vector<std::size_t> ns;
  for (std::size_t n = 1; n <= 200; n += 7) ns.push_back(n);
  const auto r = check_cov_hessian(s.fam, 0, ns);
  CHECK(r.max_difference <= 0.05);
  CHECK(r.difference[0] < 0.05);

  Setup z(doubling(Observable::zero()), 512);
  const std::vector<std::size_t> few{1, 5, 20};
  const auto rz = check_cov_hessian(z.fam, 0, few);
  for (std::size_t i = 0; i < few.size(); ++i) {
    CHECK(std::abs(rz.variance[i]) <= 1e-12);
    CHECK(std::abs(rz.hessian[i]) <= 1e-6);
  }
}

TEST_CASE("norm decay") {
  Setup s(doubling(Observable::scalar(cosine())), 1024);
  const NormalizedTransfer tilde(s.fam);
  NormDecayOptions opt;
  opt.n_max = 24;
  opt.n_stride = 6;
  opt.trials = 64;
  const std::vector<double> ts{0.1, 0.2};
  const auto r = norm_decay_scan(tilde, 0, ts, opt);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].fit.slope < 0.0);
  const double ratio = r.rows[1].fit.slope / r.rows[0].fit.slope;
  CHECK(ratio >= 2.0);
  CHECK(ratio <= 8.0);
  CHECK(r.uniform_bound <= 10.0);

  const std::vector<double> t0{0.0};
  const auto flat = norm_decay_scan(tilde, 0, t0, opt);
  for (double v : flat.rows[0].norm) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("variance growth") {
  Setup s(doubling(Observable::scalar(cosine())), 2048);
  const std::vector<std::int64_t> js{0};
  const std::vector<std::vector<double>> e1{{1.0}};
  const auto g = variance_growth_check(s.fam, js, 512, e1, 0.4);
  CHECK(g.min_ratio == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(g.pass);

  Setup b(doubling(Observable::scalar([](double x) {
            return std::cos(2 * kTau * x) - std::cos(kTau * x);
          })),
          2048);
  const auto cb = variance_growth_check(b.fam, js, 512, e1, 0.4);
  CHECK_FALSE(cb.pass);
  CHECK(cb.min_ratio <= 4.0 / 512);

  Observable two;
  two.components = {cosine(), [](double x) { return std::sin(kTau * x); }};
  Setup d(doubling(two), 2048);
  const std::vector<std::vector<double>> dirs{{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}};
  const auto rd = variance_growth_check(d.fam, js, 64, dirs, 0.4);
  CHECK(rd.min_eigen_ratio >= 0.4);
}

TEST_CASE("stability") {
  Setup a(make_homogeneous(make_mp_map(0.5), nullptr, Observable::scalar([](double x) { return x; })),
          512, 40);
  StabilityOptions opt;
  opt.n_max = 40;
  const auto same = stability_scan(a.fam, a.fam, opt);
  CHECK(same.eps_hat == 0.0);
  CHECK(same.sup_ratio == 0.0);

  Setup shifted(make_homogeneous(make_mp_map(0.5), [](double) { return 0.3; },
                                 Observable::scalar([](double x) { return x; })),
                512, 40);
  const auto c1 = covariance_curve(a.fam, 0, 40);
  const auto c2 = covariance_curve(shifted.fam, 0, 40);
  for (std::size_t n = 0; n <= 40; ++n) CHECK(std::abs(c1.var(n) - c2.var(n)) <= 1e-10);

  double prev = INFINITY;
  for (double db : {0.04, 0.02, 0.01}) {
    Setup p(make_homogeneous(make_mp_map(0.5 + db), nullptr,
                             Observable::scalar([](double x) { return x; })),
            512, 40);
    const auto r = stability_scan(a.fam, p.fam, opt);
    CHECK(r.sup_ratio < prev);
    prev = r.sup_ratio;
  }
}

TEST_CASE("symmetric eigen helpers") {
  const std::vector<double> m{2.0, 1.0, 1.0, 2.0};
  CHECK(symmetric_norm(m, 2) == doctest::Approx(3.0));
  CHECK(symmetric_min_eigen(m, 2) == doctest::Approx(1.0));
}
