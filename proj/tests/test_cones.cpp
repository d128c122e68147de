#include <doctest.h>

#include <cmath>
#include <random>

#include "seqtx/cones.hpp"
#include "seqtx/errors.hpp"
#include "seqtx/rpf.hpp"

using namespace seqtx;

namespace {

ConeParams unit_params(double kappa = 1.0) {
  ConeParams p;
  p.kappa = kappa;
  p.alpha = 1.0;
  p.zeta = 0.75;
  return p;
}

SequentialSystem mp() {
  return make_homogeneous(make_mp_map(0.5), nullptr, Observable::scalar([](double x) { return x; }));
}

}  // namespace

TEST_CASE("cone membership") {
  const Grid g(256);
  for (double k : {0.5, 1.0, 3.0}) {
    const auto m = cone_member(GridFunction::constant(g, 0, 1.0), unit_params(k));
    CHECK(m.member);
    CHECK(m.margin == doctest::Approx(k));
  }
  const auto lin = cone_member(GridFunction::sample(g, 0, [](double x) { return cplx(1 + x, 0); }),
                               unit_params());
  CHECK(lin.member);
  CHECK(std::abs(lin.margin) <= 1e-12);
  CHECK_FALSE(cone_member(GridFunction::sample(g, 0, [](double x) { return cplx(x, 0); }),
                          unit_params())
                  .member);
}

TEST_CASE("cone sampling") {
  const Grid g(512);
  const auto p = unit_params(2.0);
  const auto flat = sample_cone(p, g, 0, 1, 3, 0.0);
  REQUIRE(flat.size() == 1);
  CHECK(holder_seminorm(flat[0], 1.0) == 0.0);
  const auto a = sample_cone(p, g, 0, 40, 5);
  const auto b = sample_cone(p, g, 0, 40, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(cone_member(a[i], p).member);
    CHECK((a[i] - b[i]).sup_norm() == 0.0);
  }
}

TEST_CASE("hilbert distance") {
  const Grid g(256);
  const auto p = unit_params();
  const auto f = sample_cone(p, g, 0, 1, 9)[0];
  CHECK(hilbert_distance(f, f, p, 500, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(std::abs(hilbert_distance(f, f * cplx(2.5), p, 500, 1)) <= 1e-12);
  const auto one = GridFunction::constant(g, 0, 1.0);
  const auto near = GridFunction::sample(g, 0, [](double x) { return cplx(1 + 0.01 * x, 0); });
  const double d = hilbert_distance(one, near, p, 2000, 1);
  CHECK(d > 0.0);
  CHECK(d <= 0.05);
  const auto outside = GridFunction::sample(g, 0, [](double x) { return cplx(1 + x, 0); });
  CHECK(hilbert_distance(one, outside, p, 2000, 1) == kBoundary);
}

TEST_CASE("invariance") {
  const TransferContext dctx(make_homogeneous(make_linear_expanding(2), nullptr, Observable::zero()),
                             512);
  const auto one = GridFunction::constant(dctx.grid(), 0, 1.0);
  CHECK(holder_seminorm(dctx.apply(0, zero_param(1), one), 1.0) == 0.0);

  const auto sys = mp();
  const auto p = make_cone_params(sys, 0.1);
  CHECK(p.zeta == doctest::Approx(0.75 * 1.1));
  const TransferContext ctx(sys, 1024);
  const auto r = check_invariance(ctx, 0, p, 100, 1);
  CHECK(r.passed == 100);
  CHECK(r.worst_ratio <= 0.75 * 1.1);
  CHECK(r.pass);

  const auto wavy = make_homogeneous(make_linear_expanding(2), [](double x) { return 0.2 * x; },
                                     Observable::zero());
  CHECK_THROWS_AS(make_cone_params(wavy, 0.1, 0.5), ParameterError);
}

TEST_CASE("diameter") {
  const TransferContext ctx(make_homogeneous(make_linear_expanding(2), nullptr, Observable::zero()),
                            256);
  const auto p = unit_params();
  const auto f = sample_cone(p, ctx.grid(), 0, 1, 2);
  const std::vector<GridFunction> two{f[0], f[0]};
  const auto set = generating_set(ctx.grid(), p, 500, 1);
  CHECK(sampled_diameter(two, p, set) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  double prev = INFINITY;
  for (double zeta : {0.9, 0.75, 0.5}) {
    auto q = p;
    q.zeta = zeta;
    const auto d = estimate_diameter(ctx, 0, q, 30, 4, 1000);
    CHECK(d.finite);
    CHECK(d.diameter <= prev + 1e-12);
    prev = d.diameter;
  }
}

TEST_CASE("aperture") {
  const Grid g(512);
  const auto p = unit_params();
  const std::vector<GridFunction> one{GridFunction::constant(g, 0, 1.0)};
  CHECK(check_aperture(p, one, 0).passed == 1);
  const std::vector<GridFunction> edge{
      GridFunction::sample(g, 0, [](double x) { return cplx(1 + 0.9 * x, 0); })};
  const auto r = check_aperture(p, edge, 0);
  CHECK(r.passed == 1);
  CHECK(r.worst_ratio == doctest::Approx(2.8 / 3.0));
  const auto many = sample_cone(p, g, 0, 500, 8);
  CHECK(check_aperture(p, many, 0).passed == 500);
}

TEST_CASE("decomposition") {
  const Grid g(512);
  const auto p = unit_params();
  const auto in = GridFunction::sample(g, 0, [](double x) { return cplx(2 + x, 0); });
  const auto d0 = cone_decompose(in, p);
  CHECK(d0.parts.size() == 1);

  const auto shifted = GridFunction::sample(g, 0, [](double x) { return cplx(x - 0.5, 0); });
  const auto d = cone_decompose(shifted, p);
  GridFunction sum(g, 0);
  for (const auto& part : d.parts) sum += part;
  CHECK((sum - shifted).sup_norm() <= 1e-14);
  CHECK(d.members);
  CHECK(d.norm_sum <= 3.0 * 2.0 * 1.5 + 1e-12);
  CHECK(d.norm_sum <= d.bound);

  const auto imag = GridFunction::constant(g, 0, cplx(0, 1));
  const auto di = cone_decompose(imag, p);
  for (auto c : di.coeff) CHECK(c.real() == 0.0);
}

TEST_CASE("perturbation") {
  const auto zero_u = make_homogeneous(make_mp_map(0.5), nullptr, Observable::zero());
  const TransferContext ctx(zero_u, 512);
  const auto p = unit_params(2.0);
  const auto set = generating_set(ctx.grid(), p, 200, 1);
  std::vector<ZParam> zs{scalar_param(0.0), scalar_param(0.1), scalar_param(0.01)};
  const auto r = check_perturbation(ctx, 0, p, zs, set, 4, 2);
  for (const auto& row : r.rows) CHECK(row.c_hat == 0.0);

  const auto sys = mp();
  const TransferContext mctx(sys, 1024);
  RpfConfig rc;
  rc.depth = 40;
  const RpfSolver solver(mctx, rc);
  const GibbsFamily fam(solver);
  const double m = fam.expect(0, mctx.sample(0, [](double x) { return cplx(x, 0); }));
  const TransferContext cctx(
      sys.with_observable([m](std::int64_t, const Fiber&) {
        return Observable::scalar([m](double x) { return x - m; });
      }),
      1024);
  const auto q = make_cone_params(sys, 0.1);
  const auto big = generating_set(cctx.grid(), q, 2000, 3);
  std::vector<ZParam> decades{scalar_param(0.1), scalar_param(0.01), scalar_param(0.001)};
  const auto pr = check_perturbation(cctx, 0, q, decades, big, 10, 4);
  CHECK(pr.spread <= 2.0);
}

TEST_CASE("four number bound") {
  const auto r = four_number_bound(cplx(1.01), cplx(0.5), 1.0, 0.5, 0.02, 0.6);
  CHECK(r.hypotheses);
  CHECK(r.lhs <= r.rhs);
}
