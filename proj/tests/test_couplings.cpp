#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mfgcn/couplings.hpp"

using namespace mfgcn;

namespace {

ValueField cos_potential(const Grid& g, double amp) {
  ValueField a(g);
  for (int j = 0; j < g.n(); ++j) a[j] = amp * std::cos(2 * std::numbers::pi * g.x(j));
  return a;
}

DensityField random_density(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.05, 1);
  DensityField m(g);
  for (int j = 0; j < g.n(); ++j) m[j] = d(rng);
  m *= 1.0 / integral(m);
  return m;
}

}  // namespace

TEST_SUITE("couplings") {
  TEST_CASE("decoupled game returns the potential") {
    Grid g(32);
    auto c = CouplingSpec::make(cos_potential(g, 0.2), {0, 0}, ValueField(g), {});
    std::mt19937_64 rng(1);
    DensityField m = random_density(g, rng);
    CHECK(sup_norm((eval_f(c, m) - cos_potential(g, 0.2)).values()) == 0.0);
    CHECK(sup_norm(eval_g(c, m).values()) == 0.0);
  }

  TEST_CASE("uniform density sees only the mean eigenvalue") {
    Grid g(32);
    auto c = CouplingSpec::make(cos_potential(g, 0.3), {0.4, 1.0, 0.5}, cos_potential(g, -0.1), {0.2, 2.0});
    ValueField f = eval_f(c, uniform_density(g));
    ValueField gg = eval_g(c, uniform_density(g));
    for (int j = 0; j < 32; ++j) {
      CHECK(f[j] == doctest::Approx(cos_potential(g, 0.3)[j] + 0.4).epsilon(1e-13).scale(1.0));
      CHECK(gg[j] == doctest::Approx(cos_potential(g, -0.1)[j] + 0.2).epsilon(1e-13).scale(1.0));
    }
  }

  TEST_CASE("point mass gives the kernel column") {
    Grid g(32);
    auto c = CouplingSpec::make(ValueField(g), {0.0, 1.0}, ValueField(g), {0.0, 1.0});
    for (int y : {0, 5, 19}) {
      ValueField f = eval_f(c, point_mass(g, y));
      ValueField gg = eval_g(c, point_mass(g, y));
      for (int j = 0; j < 32; ++j) {
        double expect = std::cos(2 * std::numbers::pi * (g.x(j) - g.x(y)));
        CHECK(std::abs(f[j] - expect) < 4 * g.h() * g.h());
        CHECK(std::abs(gg[j] - expect) < 4 * g.h() * g.h());
      }
    }
  }

  TEST_CASE("flat derivative") {
    Grid g(32);
    auto c = CouplingSpec::make(cos_potential(g, 0.2), {0.3, 1.0, 0.25}, ValueField(g), {0.0, 0.5});
    CHECK(sup_norm(apply_flat_derivative(c, SignedMeasure(g), Which::f).values()) == 0.0);

    std::mt19937_64 rng(2);
    DensityField m = random_density(g, rng), m2 = random_density(g, rng);
    SignedMeasure rho(g, m2.data());
    rho -= SignedMeasure(g, m.data());
    for (double eps : {1e-3, 0.1, 0.7}) {
      DensityField me(g, m.data());
      for (int j = 0; j < 32; ++j) me[j] += eps * rho[j];
      ValueField diff = eval_f(c, me) - eval_f(c, m);
      ValueField lin = eps * apply_flat_derivative(c, rho, Which::f);
      CHECK(sup_norm((diff - lin).values()) < 1e-13);
    }

    auto c1 = CouplingSpec::make(ValueField(g), {0.0, 1.0}, ValueField(g), {});
    SignedMeasure dd(g);
    dd[3] = 1.0 / g.h();
    dd[11] = -1.0 / g.h();
    ValueField out = apply_flat_derivative(c1, dd, Which::f);
    for (int j = 0; j < 32; ++j) {
      double expect = std::cos(2 * std::numbers::pi * (g.x(j) - g.x(3))) - std::cos(2 * std::numbers::pi * (g.x(j) - g.x(11)));
      CHECK(std::abs(out[j] - expect) < 8 * g.h() * g.h());
    }

    SignedMeasure bad(g);
    bad[0] = 1.0;
    CHECK_THROWS_AS(apply_flat_derivative(c, bad, Which::f), Error);
  }

  TEST_CASE("flat derivative has zero mean on centered input") {
    Grid g(16);
    auto c = CouplingSpec::make(ValueField(g), {1.0, 1.0, 0.5}, ValueField(g), {});
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    SignedMeasure rho(g);
    for (int j = 0; j < 16; ++j) rho[j] = nd(rng);
    double mean = integral(rho);
    for (int j = 0; j < 16; ++j) rho[j] -= mean;
    CHECK(std::abs(integral(apply_flat_derivative(c, rho, Which::f))) < 1e-13);
  }

  TEST_CASE("monotonicity certificate") {
    Grid g(32);
    auto good = CouplingSpec::make(ValueField(g), {1.0, 0.5}, ValueField(g), {});
    CHECK(monotonicity_certificate(good, 100, 42).min_quadratic_form >= -1e-12);

    auto none = CouplingSpec::make(ValueField(g), {0, 0, 0}, ValueField(g), {});
    CHECK(monotonicity_certificate(none, 50, 42).min_quadratic_form == 0.0);

    auto bad = CouplingSpec::make_unchecked(ValueField(g), {0.0, -1.0}, ValueField(g), {});
    auto rep = monotonicity_certificate(bad, 100, 42);
    CHECK(rep.min_quadratic_form <= -0.4);
    CHECK(rep.min_quadratic_form == doctest::Approx(-0.5));
    // the witness lies in the span of the first mode
    double cc = 0, ss = 0;
    for (int j = 0; j < 32; ++j) {
      cc += g.h() * rep.witness[j] * std::cos(2 * std::numbers::pi * g.x(j));
      ss += g.h() * rep.witness[j] * std::sin(2 * std::numbers::pi * g.x(j));
    }
    CHECK(cc * cc + ss * ss == doctest::Approx(0.5));

    CHECK_THROWS_AS(CouplingSpec::make(ValueField(g), {0.0, -1.0}, ValueField(g), {}), Error);
    CHECK_THROWS_AS(CouplingSpec::make(ValueField(g), std::vector<double>(10, 1.0), ValueField(g), {}), Error);
  }

  TEST_CASE("lipschitz bound against wasserstein") {
    Grid g(32);
    auto c = CouplingSpec::make(cos_potential(g, 0.2), {0.5, 1.0, 0.3}, ValueField(g), {});
    const double L = lipschitz_constant(c);
    CHECK(L == doctest::Approx(2 * std::numbers::pi * (1.0 + 0.6)));
    std::mt19937_64 rng(8);
    for (int t = 0; t < 40; ++t) {
      DensityField a = random_density(g, rng), b = random_density(g, rng);
      if (t % 5 == 0) b = point_mass(g, t);
      double lhs = sup_norm((eval_f(c, a) - eval_f(c, b)).values());
      CHECK(lhs <= L * wasserstein1(a, b) + 1e-12);
    }
  }
}
