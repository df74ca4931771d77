// Property suite behind `mfgcn check`: one quick invariant per module on the
// configured grid and coupling, with horizons cut short to keep it fast.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>

#include "mfgcn/diagnostics.hpp"
#include "mfgcn/discounted.hpp"
#include "mfgcn/linearized.hpp"
#include "tasks.hpp"

namespace mfgcn::cli {

namespace {

using json = nlohmann::ordered_json;

struct Check {
  std::string name;
  std::function<std::pair<bool, double>()> run;  // (pass, measured value)
};

DensityField random_density(const Grid& g, std::mt19937_64& rng) {
  DensityField m(g);
  double z = 0;
  for (int j = 0; j < g.n(); ++j) {
    m[j] = 0.1 + static_cast<double>(rng() >> 11) * 0x1.0p-53;
    z += g.h() * m[j];
  }
  for (int j = 0; j < g.n(); ++j) m[j] /= z;
  return m;
}

}  // namespace

int run_checks(TaskContext& ctx, RunRecord& rec) {
  ExperimentConfig cfg = ctx.cfg;
  cfg.horizon = std::min(cfg.horizon, 1.0);
  cfg.epochs = std::min(cfg.epochs, 2);
  const Grid g = make_grid(cfg);
  const CouplingSpec c = make_coupling(cfg);
  const DensityField m0 = make_density(g, cfg.m0);
  const DensityField m1 = make_density(g, cfg.anchor);
  SolveParams sp = make_solve_params(cfg);
  sp.damping = Damping::fixed;
  sp.theta = 1.0;
  sp.tol = std::min(sp.tol, 1e-10);
  std::mt19937_64 rng(cfg.seed);
  const double h = g.h();

  std::vector<Check> checks;
  checks.push_back({"torus: translation adjoint", [&] {
                      ValueField u(g), v(g);
                      for (int j = 0; j < g.n(); ++j) {
                        u[j] = std::sin(2 * std::numbers::pi * g.x(j)) + 0.3 * std::cos(6 * std::numbers::pi * g.x(j));
                        v[j] = std::exp(std::cos(2 * std::numbers::pi * g.x(j)));
                      }
                      const double s = 0.37 * h + 0.11;
                      auto tu = translate(u, s), tv = translate(v, -s);
                      double a = 0, b = 0;
                      for (int j = 0; j < g.n(); ++j) a += tu[j] * v[j], b += u[j] * tv[j];
                      const double err = std::abs(a - b) * h;
                      return std::pair{err < 1e-12, err};
                    }});
  checks.push_back({"torus: W1 triangle inequality", [&] {
                      double worst = 0;
                      for (int t = 0; t < 20; ++t) {
                        auto a = random_density(g, rng), b = random_density(g, rng), d = random_density(g, rng);
                        worst = std::max(worst, wasserstein1(a, d) - wasserstein1(a, b) - wasserstein1(b, d));
                      }
                      return std::pair{worst <= 1e-14, worst};
                    }});
  checks.push_back({"couplings: monotone kernel", [&] {
                      auto r = monotonicity_certificate(c, 64, cfg.seed);
                      return std::pair{r.min_quadratic_form >= -1e-12, r.min_quadratic_form};
                    }});
  checks.push_back({"common-noise: leaf probabilities sum to one", [&] {
                      auto tree = make_tree(cfg);
                      std::vector<double> ones(static_cast<std::size_t>(tree.leaf_count()), 1.0);
                      const double err = std::abs(expect_over_leaves(tree, ones) - 1.0);
                      return std::pair{err < 1e-15, err};
                    }});
  checks.push_back({"mfg-core: sigma = 0 tree equals the single-branch solver", [&] {
                      const int steps = std::max(1, static_cast<int>(std::lround(cfg.horizon / cfg.dt)));
                      auto tree = NoiseTree::build(0.0, cfg.horizon, 0, steps);
                      SolveParams q = sp;
                      q.parallel = false;
                      auto a = solve_mfg_tree(c, tree, m0, Terminal::coupling(), q);
                      auto b = solve_mfg_deterministic(c, cfg.horizon, steps, m0, Terminal::coupling(), q);
                      double err = 0;
                      for (int k = 0; k <= steps; ++k)
                        for (int j = 0; j < g.n(); ++j) {
                          err = std::max(err, std::abs(a.u.slice(0, k)[static_cast<std::size_t>(j)] - b.u[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]));
                          err = std::max(err, std::abs(a.m.slice(0, k)[static_cast<std::size_t>(j)] - b.m[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]));
                        }
                      return std::pair{err <= 1e-12, err};
                    }});
  checks.push_back({"mfg-core: mass and sign of every density slice", [&] {
                      auto s = solve_mfg_tree(c, make_tree(cfg), m0, Terminal::coupling(), sp);
                      double worst = 0, low = 0;
                      for (int id = 0; id < s.tree.node_count(); ++id)
                        for (int k = 0; k < s.m.slices(id); ++k) {
                          worst = std::max(worst, std::abs(integral(s.m.slice(id, k), h) - 1.0));
                          for (double v : s.m.slice(id, k)) low = std::min(low, v);
                        }
                      return std::pair{worst < 1e-12 && low >= 0.0 && s.converged, worst};
                    }});
  checks.push_back({"diagnostics: Lasry-Lions duality bracket", [&] {
                      auto tree = make_tree(cfg);
                      auto a = solve_mfg_tree(c, tree, m0, Terminal::coupling(), sp);
                      auto b = solve_mfg_tree(c, tree, m1, Terminal::coupling(), sp);
                      auto r = lasry_lions_functional(a, b);
                      return std::pair{r.holds(1e-6), r.max_violation};
                    }});
  checks.push_back({"linearized: homogeneity of the derivative", [&] {
                      auto tree = make_tree(cfg);
                      auto base = solve_mfg_tree(c, tree, m0, Terminal::coupling(), sp);
                      auto rho = random_direction(g, cfg.seed);
                      auto twice = rho;
                      for (int j = 0; j < g.n(); ++j) twice[j] *= 2.0;
                      SolveParams q = sp;
                      q.tol = 1e-12;
                      auto z1 = solve_linearized(base, c, rho, 0.0, q).z0();
                      auto z2 = solve_linearized(base, c, twice, 0.0, q).z0();
                      double err = 0;
                      for (int j = 0; j < g.n(); ++j) err = std::max(err, std::abs(z2[j] - 2 * z1[j]));
                      return std::pair{err < 1e-9 * (1 + sup_norm(z1.values())), err};
                    }});
  checks.push_back({"discounted: delta u bounded by sup f", [&] {
                      DiscountCaps caps;
                      caps.max_horizon = 4.0;
                      caps.epoch_len = 1.0;
                      caps.dt = cfg.dt;
                      auto s = solve_discounted(c, cfg.sigma, 0.5, m0, sp, caps);
                      const double excess = discounted_value_sup(s) - running_cost_sup(c, s.base);
                      return std::pair{excess <= 1e-10, excess};
                    }});
  checks.push_back({"diagnostics: forward probe keeps zero mass", [&] {
                      auto mu = centered_dirac(g, g.n() / 3);
                      auto r = fp_decay_probe(drift_presets()[2].v, mu, 0.5, cfg.dt);
                      return std::pair{r.max_mass < 1e-12, r.max_mass};
                    }});
  checks.push_back({"diagnostics: certificate rejects a hypothesis-1 control", [&] {
                      Series tiny, one;
                      for (int k = 0; k <= 50; ++k) {
                        tiny.push(0.1 * k, 1e-8);
                        one.push(0.1 * k, 1.0);
                      }
                      auto r = certificate_check(tiny, one, tiny, {});
                      return std::pair{!r.holds[0], r.required[0]};
                    }});

  NdjsonWriter nd(ctx.out / "check.ndjson", ctx.hash);
  rec.manifest.push_back(nd.path());
  int passed = 0;
  ctx.screen << "== check\n";
  for (auto& ch : checks) {
    bool pass = false;
    double value = 0;
    std::string error;
    try {
      std::tie(pass, value) = ch.run();
    } catch (const std::exception& e) {
      error = e.what();
    }
    passed += pass;
    ctx.screen << "  " << (pass ? "pass " : "FAIL ") << ch.name << (error.empty() ? "" : "  (" + error + ")") << "\n";
    json m{{"name", ch.name}, {"pass", pass}, {"value", value}};
    if (!error.empty()) m["error"] = error;
    nd.write("check", m);
  }
  const int failed = static_cast<int>(checks.size()) - passed;
  nd.write("check", json{{"passed", passed}, {"failed", failed}});
  ctx.screen << "  " << passed << " passed, " << failed << " failed\n";
  return failed == 0 ? ok : check_failed;
}

}  // namespace mfgcn::cli
