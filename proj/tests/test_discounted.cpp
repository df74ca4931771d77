#include <cmath>

#include "doctest.h"
#include "mfgcn/discounted.hpp"
#include "support/presets.hpp"

using namespace mfgcn;

namespace {

DiscountCaps quick_caps(double horizon) {
  DiscountCaps caps;
  caps.max_horizon = horizon;
  caps.epoch_len = 1.0;
  caps.dt = 1e-2;
  return caps;
}

}  // namespace

TEST_SUITE("discounted") {
  TEST_CASE("flat running cost") {
    Grid g(32);
    const double c0 = 0.8, delta = 0.5;
    SolveParams p;
    p.tol = 1e-8;
    auto s = solve_discounted(presets::flat_cost(g, c0), 0.5, delta, bump_density(g, 0.3, 0.1), p, quick_caps(8.0));
    CHECK(s.capped);
    CHECK(s.t_max == doctest::Approx(8.0));
    CHECK(s.base.tree.epochs() == 8);
    // discrete geometric sum: u_0 = c0 dt sum_{i<N} (1 - delta dt)^i
    const double q = std::pow(1 - delta * s.base.dt(), s.base.tree.total_steps());
    for (double v : s.base.u.slice(0, 0)) CHECK(delta * v == doctest::Approx(c0 * (1 - q)).epsilon(1e-12));
    CHECK(std::abs(delta * s.base.u.slice(0, 0)[0] - c0) <= delta * s.truncation_error_bound);
    CHECK(s.truncation_error_bound == doctest::Approx(c0 * std::exp(-delta * 8.0) / delta));
  }

  TEST_CASE("horizon follows the tolerance when the cap allows it") {
    Grid g(32);
    SolveParams p;
    p.tol = 1e-3;
    auto s = solve_discounted(presets::flat_cost(g, 1.0), 0.0, 1.0, uniform_density(g), p, quick_caps(12.0));
    CHECK_FALSE(s.capped);
    CHECK(s.t_max == doctest::Approx(std::log(1e3)));
  }

  TEST_CASE("zero data gives zero value") {
    Grid g(32);
    auto s = solve_discounted(CouplingSpec::zero(g), 0.5, 0.3, bump_density(g, 0.5, 0.1), SolveParams{}, quick_caps(4.0));
    CHECK(sup_norm(s.base.u.raw()) == 0.0);
  }

  TEST_CASE("tail closures shift u by a decaying constant only") {
    Grid g(32);
    SolveParams p;
    p.tol = 1e-9;
    auto caps = quick_caps(3.0);
    auto plain = solve_discounted(presets::standard(g), 0.5, 0.4, uniform_density(g), p, caps);
    caps.tail = TailClosure::self_consistent;
    auto closed = solve_discounted(presets::standard(g), 0.5, 0.4, uniform_density(g), p, caps);
    CHECK(plain.base.m.raw() == closed.base.m.raw());
    // the closed value has mean u_0 equal to the tail constant: the window and
    // the tail earn the same normalized rate
    CHECK(integral(closed.base.u.slice(0, 0), g.h()) == doctest::Approx(closed.tail_value).epsilon(1e-12));
    for (int id : {0, 1, 2}) {
      auto a = plain.base.u.slice(id, 0), b = closed.base.u.slice(id, 0);
      for (std::size_t j = 1; j < a.size(); ++j) CHECK((b[j] - a[j]) == doctest::Approx(b[0] - a[0]).epsilon(1e-12));
    }
  }

  TEST_CASE("discounted value is bounded by the running cost") {
    Grid g(32);
    SolveParams p;
    p.tol = 1e-8;
    auto c = presets::standard(g);
    for (double delta : {1.0, 0.5, 0.25}) {
      auto s = solve_discounted(c, 0.5, delta, bump_density(g, 0.2, 0.08), p, quick_caps(6.0));
      REQUIRE(s.base.converged);
      CHECK(discounted_value_sup(s) <= running_cost_sup(c, s.base) + 1e-6);
    }
  }

  TEST_CASE("two initial laws contract") {
    Grid g(32);
    SolveParams p;
    p.tol = 1e-10;
    auto c = presets::standard(g);
    auto caps = quick_caps(4.0);
    auto s1 = solve_discounted(c, 0.5, 0.5, bump_density(g, 0.2, 0.08), p, caps);
    auto s2 = solve_discounted(c, 0.5, 0.5, bump_density(g, 0.7, 0.15), p, caps);
    REQUIRE(s1.base.converged);
    REQUIRE(s2.base.converged);
    auto gap = [&](int k) {
      return s1.base.expect_at_step(k, [&](int id, auto, auto m1) {
        int j = local_slice(s1.base.tree, id, k);
        return wasserstein1_samples(m1, s2.base.m.slice(id, j), g.h());
      });
    };
    // fit log gap on [0, 0.3], before the gap reaches the solver floor
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int k = 0; k <= 30; k += 3) {
      double t = k * s1.base.dt(), y = std::log(gap(k));
      sx += t, sy += y, sxx += t * t, sxy += t * y;
      ++cnt;
    }
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    CHECK(-slope > 1.0);
    CHECK(gap(300) < 1e-3 * gap(0));
  }
}
