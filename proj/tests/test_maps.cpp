#include <doctest.h>

#include <cmath>
#include <numbers>

#include "seqtx/errors.hpp"
#include "seqtx/maps.hpp"
#include "seqtx/system.hpp"

using namespace seqtx;

TEST_CASE("mp map forward values and fixed point") {
  const auto f = make_mp_map(0.5);
  CHECK(f(0.5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f(0.75) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(f.branches[0].inverse(0.0) == 0.0);
  CHECK(f.branch_count() == 2);
  CHECK(f.contracting_count == 1);
}

TEST_CASE("mp forward of inverse is the identity on each branch") {
  const auto f = make_mp_map(0.3);
  for (const auto& b : f.branches)
    for (double x : {1e-6, 0.1, 0.37, 0.5, 0.9, 1.0 - 1e-9}) {
      const double y = b.inverse(x);
      CHECK(y >= b.lo);
      CHECK(y <= b.hi);
      CHECK(b.forward(y) == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("linear expanding maps") {
  const auto m2 = make_linear_expanding(2);
  CHECK(m2(0.3) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m2.contracting_count == 0);
  CHECK(m2.sigma == 2.0);

  const auto m3 = make_linear_expanding(3);
  const auto pre = m3.preimages(0.0);
  REQUIRE(pre.size() == 3);
  CHECK(pre[0] == doctest::Approx(0.0));
  CHECK(pre[1] == doctest::Approx(1.0 / 3.0));
  CHECK(pre[2] == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(make_linear_expanding(1), ParameterError);
}

TEST_CASE("every point has d preimages mapping back to it") {
  for (const auto& map : {make_mp_map(0.5), make_linear_expanding(3)})
    for (double x : {0.01, 0.25, 0.6, 0.99}) {
      const auto pre = map.preimages(x);
      CHECK(static_cast<int>(pre.size()) == map.branch_count());
      for (double y : pre) CHECK(map(y) == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("perturbed expanding maps") {
  const auto same = make_perturbed_expanding(2, BumpSpec{});
  const auto lin = make_linear_expanding(2);
  for (double x : {0.1, 0.3, 0.7}) CHECK(same(x) == lin(x));
  CHECK(same.contracting_count == 0);

  // slope 2(1 - A) = 0.8 at the bottom of the bump
  const auto p = make_perturbed_expanding(2, BumpSpec{0, 0.0, 1.0, 0.6});
  CHECK(p.branch_count() == 2);
  CHECK(p.contracting_count == 1);
  CHECK(p.L == doctest::Approx(1.25));
  CHECK(p.sigma == 2.0);
  const auto rep = verify_pairing(p, 4000, 3);
  CHECK(rep.consistent);
  CHECK(rep.q == 1);
  CHECK(rep.L_hat <= 1.25 + 1e-8);
  CHECK(rep.L_hat > 1.2);

  CHECK_THROWS_AS(make_perturbed_expanding(2, BumpSpec{0, 0.0, 1.0, 1.2}), ConstructionError);
}

TEST_CASE("verify_pairing on the reference maps") {
  const auto lin = verify_pairing(make_linear_expanding(2), 2000, 1);
  CHECK(lin.consistent);
  CHECK(lin.q == 0);
  for (double r : lin.branch_max_ratio) CHECK(r == doctest::Approx(0.5).epsilon(1e-9));

  const auto mp = verify_pairing(make_mp_map(0.5), 4000, 1);
  CHECK(mp.consistent);
  CHECK(mp.d == 2);
  CHECK(mp.q == 1);
  CHECK(mp.L_hat <= 1.0);
  CHECK(mp.L_hat > 0.95);
  CHECK(mp.branch_max_ratio[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("driven mp systems") {
  const auto sys = make_driven_mp_system(0.618, [](double) { return 0.4; }, 10);
  const auto ref = make_mp_map(0.4);
  for (std::int64_t j : {0, 3, 9})
    for (double x : {0.1, 0.45, 0.8}) CHECK(sys.map(j)(x) == ref(x));

  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  auto beta = [](double w) { return 0.3 + 0.2 * w; };
  std::vector<int> bins(10, 0);
  const int count = 10000;
  for (int j = 0; j < count; ++j) {
    const double b = driven_beta(golden, beta, j);
    REQUIRE(b >= 0.3);
    REQUIRE(b <= 0.5);
    ++bins[std::min(9, static_cast<int>((b - 0.3) / 0.02))];
  }
  for (int c : bins) CHECK(std::abs(c - count / 10) <= count / 10 * 0.05);

  const auto one = make_driven_mp_system(golden, beta, 1);
  CHECK(one.horizon() == 1);
  CHECK_THROWS_AS(make_driven_mp_system(golden, [](double w) { return w; }, 4), ParameterError);
}

TEST_CASE("compute_s") {
  const auto mp = make_homogeneous(make_mp_map(0.5), nullptr, Observable::scalar([](double x) { return x; }));
  const auto r = compute_s(mp);
  CHECK(r.s == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.below_one);
  CHECK(contraction_factor(std::log(4.0 / 3.0), 2, 1, 1.0, 2.0, 1.0) ==
        doctest::Approx(1.0).epsilon(1e-12));

  const auto lin = make_homogeneous(make_linear_expanding(2), nullptr, Observable::scalar([](double) { return 0.0; }));
  CHECK(compute_s(lin).s == doctest::Approx(0.5).epsilon(1e-12));

  const auto osc = make_homogeneous(make_mp_map(0.5),
                                    [](double x) { return 2.0 * std::cos(2 * std::numbers::pi * x); },
                                    Observable::scalar([](double x) { return x; }));
  CHECK_FALSE(compute_s(osc).below_one);
}

TEST_CASE("fiber bounds") {
  const auto sys = make_homogeneous(make_linear_expanding(2), [](double x) { return 0.1 * x; },
                                    Observable::scalar([](double x) { return x; }));
  const auto b = fiber_bounds(sys, 0, 1024);
  CHECK(b.oscillation == doctest::Approx(0.1));
  CHECK(b.potential_sup == doctest::Approx(0.1));
  CHECK(b.observable_sup == doctest::Approx(1.0));
  CHECK(b.preimage_mass_sup <= 2.0 * std::exp(0.1) + 1e-12);
}
