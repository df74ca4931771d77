#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mfgcn/diagnostics.hpp"
#include "support/presets.hpp"

using namespace mfgcn;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

double heat_rate(int n, double dt, int k = 1) {
  const double h = 1.0 / n;
  const double kappa = 2.0 / (h * h) * (1 - std::cos(kTwoPi * k * h));
  return std::log1p(dt * kappa) / dt;
}

double heat_gap(int n) {
  const double h = 1.0 / n;
  return 2.0 / (h * h) * (1 - std::cos(kTwoPi * h));
}

SignedMeasure mode(const Grid& g, int k, double amp = 1.0) {
  SignedMeasure r(g);
  for (int j = 0; j < g.n(); ++j) r[j] = amp * std::cos(kTwoPi * k * g.x(j));
  return r;
}

Series sample(double T, int count, const std::function<double(double)>& f) {
  Series s;
  for (int i = 0; i <= count; ++i) {
    double t = T * i / count;
    s.push(t, f(t));
  }
  return s;
}

SolveParams tight() {
  SolveParams p;
  p.damping = Damping::fixed;
  p.tol = 1e-12;
  p.max_iters = 2000;
  return p;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("exponential fits") {
    auto exact = fit_exponential_decay(sample(3.0, 60, [](double t) { return std::exp(-2 * t); }));
    CHECK(exact.rate == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(exact.r2 == doctest::Approx(1.0));
    CHECK(exact.amplitude == doctest::Approx(1.0).epsilon(1e-10));

    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise;
    auto noisy = fit_exponential_decay(sample(6.0, 120, [&](double t) { return 3 * std::exp(-0.5 * t) * (1 + 0.01 * noise(rng)); }));
    CHECK(noisy.rate >= 0.45);
    CHECK(noisy.rate <= 0.55);
    CHECK(noisy.amplitude == doctest::Approx(3.0).epsilon(0.02));

    auto flat = fit_exponential_decay(sample(2.0, 10, [](double) { return 0.4; }));
    CHECK(flat.rate == 0.0);

    // growth is reported as no decay
    CHECK(fit_exponential_decay(sample(1.0, 10, [](double t) { return std::exp(t); })).rate == 0.0);
    CHECK_THROWS_AS(fit_exponential_decay(sample(1.0, 10, [](double) { return 1.0; }), 5.0, 6.0), Error);
  }

  TEST_CASE("fits are scale equivariant") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const double w = 0.1 + 3 * u(rng), scale = std::exp(10 * (u(rng) - 0.5));
      auto base = sample(4.0, 80, [&](double t) { return std::exp(-w * t) * (1.2 + std::sin(5 * t) * 0.1); });
      Series scaled = base;
      for (double& v : scaled.value) v *= scale;
      auto a = fit_exponential_decay(base), b = fit_exponential_decay(scaled);
      CHECK(b.rate == doctest::Approx(a.rate).epsilon(1e-9));
      CHECK(b.amplitude == doctest::Approx(scale * a.amplitude).epsilon(1e-9));
    }
  }

  TEST_CASE("two-sided fit") {
    const double T = 8.0;
    auto s = sample(T, 200, [&](double t) { return 0.3 * (std::exp(-1.7 * t) + std::exp(-1.7 * (T - t))); });
    auto f = fit_two_sided_decay(s, T, 1e-14);
    CHECK(f.rate == doctest::Approx(1.7).epsilon(1e-6));
    CHECK(f.amplitude == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(series_at(s, 4.0) == doctest::Approx(0.3 * 2 * std::exp(-6.8)));
  }

  TEST_CASE("turnpike without interaction follows the heat gap") {
    Grid g(32);
    SolveParams p = tight();
    auto tree = build_tree(0.5, 3.0, 2, 1500);
    // initial laws differing in the first mode only
    DensityField m0(g);
    for (int j = 0; j < 32; ++j) m0[j] = 1 + 0.5 * std::cos(kTwoPi * g.x(j));
    auto sol = solve_mfg_tree(CouplingSpec::zero(g), tree, m0, Terminal::coupling(), p);
    auto proxy = solve_turnpike_proxy(CouplingSpec::zero(g), sol, uniform_density(g), 1, p);
    auto rep = turnpike_report(sol, proxy, 1e-12);
    CHECK(rep.density_fit.rate == doctest::Approx(heat_gap(32)).epsilon(0.1));
    CHECK(rep.density_fit.rate == doctest::Approx(heat_rate(32, tree.dt())).epsilon(0.02));
  }

  TEST_CASE("turnpike contrast on a monotone config") {
    Grid g(32);
    SolveParams p;
    p.tol = 1e-10;
    auto c = presets::standard(g, 1.0, 0.5);
    auto tree = build_tree(0.5, 3.0, 3, 100);
    auto sol = solve_mfg_tree(c, tree, bump_density(g, 0.3, 0.08), Terminal::coupling(), p);
    auto proxy = solve_turnpike_proxy(c, sol, uniform_density(g), 2, p);
    auto rep = turnpike_report(sol, proxy, 1e-9);
    CHECK(rep.contrast >= 10);
    CHECK(rep.density_fit.rate > 0);
    CHECK(rep.gradient_gap.value.back() > 100 * series_at(rep.gradient_gap, 1.5));
  }

  TEST_CASE("stationary data stays stationary") {
    // restart a long run from its own midpoint with its own value as terminal
    Grid g(32);
    SolveParams p = tight();
    auto c = presets::standard(g);
    auto tree = build_tree(0.0, 4.0, 0, 400);
    auto sol = solve_mfg_tree(c, tree, bump_density(g, 0.3, 0.08), Terminal::coupling(), p);
    auto seg = build_tree(0.0, 1.0, 0, 100);
    auto again = solve_mfg_tree(c, seg, sol.m.field(0, 200), Terminal::fixed(sol.u.field(0, 300)), p);
    double gap = 0;
    for (int k = 0; k <= 100; ++k) {
      gap = std::max(gap, wasserstein1_samples(again.m.slice(0, k), sol.m.slice(0, 200 + k), g.h()));
      gap = std::max(gap, sup_norm((again.u.field(0, k) - sol.u.field(0, 200 + k)).values()));
    }
    CHECK(gap < 1e-9);
  }

  TEST_CASE("duality bracket") {
    Grid g(32);
    SolveParams p = tight();
    auto tree = build_tree(0.5, 1.0, 2, 500);  // dt = 1e-3
    auto c = presets::standard(g, 1.0, 0.5);
    auto s1 = solve_mfg_tree(c, tree, bump_density(g, 0.3, 0.08), Terminal::coupling(), p);
    auto s2 = solve_mfg_tree(c, tree, bump_density(g, 0.6, 0.2), Terminal::coupling(), p);

    auto same = lasry_lions_functional(s1, s1);
    CHECK(sup_norm(same.bracket.value) == 0.0);
    CHECK(same.dissipation.value.back() == 0.0);

    auto rep = lasry_lions_functional(s1, s2);
    CHECK(rep.holds(1e-6));
    for (std::size_t k = 1; k < rep.bracket.size(); ++k) CHECK(rep.bracket.value[k] <= rep.bracket.value[k - 1] + 1e-9);
    CHECK(rep.dissipation.value.back() >= rep.quadratic.value.back());
    CHECK(rep.quadratic.value.back() > 0);

    // f independent of m: the bracket drops exactly by the Hamiltonian part
    auto dec = CouplingSpec::make(presets::cosine(g, 0.2), {0.0}, ValueField(g), {0.0, 1.0});
    auto short_tree = build_tree(0.5, 0.1, 1, 50);
    auto d1 = solve_mfg_tree(dec, short_tree, bump_density(g, 0.3, 0.08), Terminal::coupling(), p);
    auto d2 = solve_mfg_tree(dec, short_tree, bump_density(g, 0.6, 0.2), Terminal::coupling(), p);
    auto id = lasry_lions_functional(d1, d2);
    double defect = 0;
    for (std::size_t k = 1; k < id.bracket.size(); ++k)
      defect = std::max(defect, std::abs(id.bracket.value[k] - id.bracket.value[0] + id.dissipation.value[k]));
    CHECK(defect < 1e-6 * (1 + id.magnitude));
    CHECK(id.dissipation.value.back() > 1e-6);
  }

  TEST_CASE("forward probe without drift") {
    Grid g(32);
    const double dt = 1e-3;
    auto one = fp_decay_probe(drift_presets()[0].v, mode(g, 1), 0.4, dt);
    CHECK(one.fit.rate == doctest::Approx(heat_gap(32)).epsilon(0.05));
    CHECK(one.fit.rate == doctest::Approx(heat_rate(32, dt)).epsilon(1e-9));
    CHECK(one.fit.r2 == doctest::Approx(1.0));

    auto two = fp_decay_probe(drift_presets()[0].v, mode(g, 1) + mode(g, 3, 5.0), 0.4, dt);
    const double slow = heat_rate(32, dt, 1), fast = heat_rate(32, dt, 3);
    CHECK(two.fit.rate > slow);
    CHECK(two.fit.rate < fast);
    auto late = fp_decay_probe(drift_presets()[0].v, mode(g, 1) + mode(g, 3, 5.0), 0.4, dt, 0.5);
    CHECK(late.fit.rate < two.fit.rate);
    CHECK(late.fit.rate == doctest::Approx(slow).epsilon(1e-3));
  }

  TEST_CASE("forward probe with bounded drifts") {
    Grid g(32);
    for (const auto& d : drift_presets()) {
      CAPTURE(d.name);
      auto r = fp_decay_probe(d.v, centered_dirac(g, 4), 0.5, 1e-3, 0.2);
      CHECK(r.fit.rate > 0);
      CHECK(r.max_mass < 1e-12);
    }
  }

  TEST_CASE("backward probe") {
    Grid g(32);
    const double dt = 1e-3;
    auto zero = [](double, double) { return 0.0; };
    auto pure = backward_decay_probe(zero, zero, presets::cosine(g, 1.0), 0.4, dt);
    CHECK(pure.fit.rate == doctest::Approx(heat_rate(32, dt)).epsilon(1e-9));

    auto flat = backward_decay_probe(drift_presets()[2].v, zero, presets::flat(g, 2.0), 0.4, dt);
    CHECK(sup_norm(flat.norm.value) < 1e-12);

    // forced problems: calibrate C on the first preset, then assert within 2x
    std::vector<Drift> sources = {
        [](double t, double x) { return std::sin(kTwoPi * x) * std::cos(3 * t); },
        [](double t, double x) { return 1.5 * std::cos(kTwoPi * x) + 0.5 * std::sin(kTwoPi * (x + t)); },
        [](double, double x) { return x < 0.5 ? 1.0 : -1.0; },
    };
    const double lam = 0.5 * heat_gap(32);
    double c_ref = 0;
    for (const auto& d : drift_presets()) {
      for (const auto& a : sources) {
        auto r = backward_decay_probe(d.v, a, ValueField(g), 1.0, dt);
        double cst = r.constant_for(lam);
        CHECK(std::isfinite(cst));
        if (c_ref == 0) c_ref = cst;
        CHECK(cst <= 2 * c_ref);
      }
    }
  }

  TEST_CASE("certificate on synthetic series") {
    const double T = 10.0;
    auto bump = [&](double w) { return sample(T, 200, [&](double t) { return std::exp(-w * t) + std::exp(-w * (T - t)); }); };
    Series a = bump(1.0), b = a, c = a;
    auto rep = certificate_check(a, b, c, {});
    CHECK(rep.hypotheses_hold());
    CHECK(rep.c0 <= 5);
    CHECK(rep.lambda >= 0.5);
    CHECK(rep.conclusion_margin >= 0);
    CHECK(rep.conclusion_rate == doctest::Approx(1.0).epsilon(0.01));

    // positive dissipation with vanishing alpha, gamma cannot satisfy hypothesis 1
    Series tiny = sample(T, 200, [](double) { return 1e-8; });
    Series one = sample(T, 200, [](double) { return 1.0; });
    auto neg = certificate_check(tiny, one, tiny, {});
    CHECK_FALSE(neg.holds[0]);
    CHECK(neg.holds[3]);
    CHECK_FALSE(neg.hypotheses_hold());

    // constant alpha, gamma with no dissipation breaks hypothesis 4, not hypothesis 1
    Series zero = sample(T, 200, [](double) { return 0.0; });
    auto flat = certificate_check(one, zero, one, {});
    CHECK(flat.holds[0]);
    CHECK_FALSE(flat.holds[3]);
    CHECK(flat.margins[3] == -1.0);
    CHECK(flat.conclusion_margin < 0);
  }

  TEST_CASE("certificate margins move together on a synthetic family") {
    const double T = 10.0;
    // blending a decaying family with a flat one degrades hypothesis 1 and the
    // conclusion together
    double prev_hyp = 2, prev_margin = 1e9;
    for (double s : {0.0, 1e-3, 1e-2, 0.1, 0.5}) {
      Series a = sample(T, 200, [&](double t) { return (1 - s) * (std::exp(-t) + std::exp(-(T - t))) + s; });
      auto rep = certificate_check(a, a, a, {});
      CAPTURE(s);
      CHECK(rep.margins[0] <= prev_hyp);
      CHECK(rep.conclusion_margin <= prev_margin);
      prev_hyp = rep.margins[0];
      prev_margin = rep.conclusion_margin;
    }
  }

  TEST_CASE("discounted certificate") {
    const double T = 12.0, delta = 0.1;
    Series a = sample(T, 240, [](double t) { return std::exp(-t); });
    auto rep = certificate_check(a, a, a, {CertificateMode::discounted, delta});
    CHECK(rep.hypotheses_hold());
    CHECK(rep.conclusion_margin >= 0);
    CHECK(rep.conclusion_rate == doctest::Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("certificate on solver output") {
    Grid g(32);
    SolveParams p = tight();
    p.tol = 1e-13;
    auto c = presets::standard(g, 1.0, 0.5);
    auto tree = build_tree(0.5, 1.2, 2, 120);
    auto s1 = solve_mfg_tree(c, tree, bump_density(g, 0.3, 0.08), Terminal::coupling(), p);
    auto s2 = solve_mfg_tree(c, tree, uniform_density(g), Terminal::coupling(), p);
    Series a, b, gm;
    certificate_series(s1, s2, a, b, gm);
    CertificateOptions opt;
    opt.floor = 1e-20;
    auto rep = certificate_check(a, b, gm, opt);
    MESSAGE("C0 " << rep.c0 << " lambda " << rep.lambda << " req " << rep.required[0] << " " << rep.required[1] << " " << rep.required[2]
                  << " " << rep.required[3] << " rate " << rep.conclusion_rate << " C " << rep.conclusion_c);
    CHECK(rep.hypotheses_hold());
    CHECK(rep.conclusion_margin >= 0);
  }
}
