#include "tasks.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "mfgcn/diagnostics.hpp"
#include "mfgcn/discounted.hpp"
#include "mfgcn/ergodic.hpp"
#include "mfgcn/linearized.hpp"

namespace mfgcn::cli {

namespace {

using json = nlohmann::ordered_json;

// One-screen summary: aligned key/value rows.
class Summary {
 public:
  Summary(std::ostream& os, const std::string& title) : os_(os) { os_ << "== " << title << "\n"; }
  void row(const std::string& key, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    row(key, std::string(buf));
  }
  void row(const std::string& key, const std::string& v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "  %-28s", key.c_str());
    os_ << buf << v << "\n";
  }

 private:
  std::ostream& os_;
};

std::filesystem::path file(TaskContext& ctx, RunRecord& rec, const std::string& name) {
  auto p = ctx.out / name;
  rec.manifest.push_back(p);
  return p;
}

Series indexed(const std::vector<double>& v) {
  Series s;
  for (std::size_t i = 0; i < v.size(); ++i) s.push(static_cast<double>(i), v[i]);
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

json fit_json(const DecayFit& f) { return json{{"rate", f.rate}, {"amplitude", f.amplitude}, {"r2", f.r2}, {"points", f.points}}; }

DensityField expected_terminal(const MFGTreeSolution& s) {
  DensityField law(s.grid());
  const auto& t = s.tree;
  for (int id = t.first_leaf(); id < t.node_count(); ++id) {
    auto m = s.m.last(id);
    for (int j = 0; j < law.size(); ++j) law[j] += t.node_prob(id) * m[static_cast<std::size_t>(j)];
  }
  return law;
}

int task_solve(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto tree = make_tree(cfg);
  auto m0 = make_density(c.grid(), cfg.m0);
  auto s = solve_mfg_tree(c, tree, m0, Terminal::coupling(), make_solve_params(cfg));
  rec.residuals = s.residuals;
  const double h = c.grid().h();
  double mass_err = 0.0;
  for (int id = 0; id < tree.node_count(); ++id)
    for (int k = 0; k < s.m.slices(id); ++k) mass_err = std::max(mass_err, std::abs(integral(s.m.slice(id, k), h) - 1.0));

  write_field(file(ctx, rec, "solve_u0.csv"), ctx.hash, s.u.slice(0, 0), h);
  write_field(file(ctx, rec, "solve_mT_mean.csv"), ctx.hash, expected_terminal(s).values(), h);
  write_series(file(ctx, rec, "solve_residuals.csv"), ctx.hash, indexed(s.residuals));
  NdjsonWriter nd(file(ctx, rec, "solve.ndjson"), ctx.hash);
  json m{{"iterations", s.iterations},     {"converged", s.converged},      {"final_residual", s.residuals.empty() ? 0.0 : s.residuals.back()},
         {"max_gradient", s.max_gradient}, {"mass_error", mass_err},        {"leaves", tree.leaf_count()},
         {"steps", tree.total_steps()},    {"residual_increases", s.residual_increases}};
  nd.write("solve", m);

  Summary t(ctx.screen, "solve");
  t.row("leaves", tree.leaf_count());
  t.row("steps", tree.total_steps());
  t.row("iterations", s.iterations);
  t.row("converged", s.converged ? "yes" : "no");
  t.row("final residual", s.residuals.empty() ? 0.0 : s.residuals.back());
  t.row("max |Du|", s.max_gradient);
  t.row("mass error", mass_err);
  return s.converged ? ok : not_converged;
}

int task_turnpike(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto tree = make_tree(cfg);
  auto sp = make_solve_params(cfg);
  auto s = solve_mfg_tree(c, tree, make_density(c.grid(), cfg.m0), Terminal::coupling(), sp);
  auto proxy = solve_turnpike_proxy(c, s, make_density(c.grid(), cfg.anchor), cfg.pad, sp);
  auto r = turnpike_report(s, proxy, cfg.noise_floor);
  rec.residuals = s.residuals;

  write_series(file(ctx, rec, "turnpike_density_gap.csv"), ctx.hash, r.density_gap);
  write_series(file(ctx, rec, "turnpike_gradient_gap.csv"), ctx.hash, r.gradient_gap);
  const double T = tree.horizon();
  const double at1 = series_at(r.density_gap, std::min(1.0, T));
  const double mid = series_at(r.density_gap, T / 2);
  NdjsonWriter nd(file(ctx, rec, "turnpike.ndjson"), ctx.hash);
  nd.write("turnpike", json{{"density_fit", fit_json(r.density_fit)},
                            {"gradient_fit", fit_json(r.gradient_fit)},
                            {"contrast", r.contrast},
                            {"gap_t1", at1},
                            {"gap_mid", mid},
                            {"converged", s.converged && proxy.converged}});

  Summary t(ctx.screen, "turnpike");
  t.row("density decay rate", r.density_fit.rate);
  t.row("density fit r2", r.density_fit.r2);
  t.row("gradient decay rate", r.gradient_fit.rate);
  t.row("contrast", r.contrast);
  t.row("E d1 at t = 1", at1);
  t.row("E d1 at T/2", mid);
  return s.converged && proxy.converged ? ok : not_converged;
}

int task_ergodic(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto p = make_ergodic_params(cfg);
  auto m0 = make_density(c.grid(), cfg.m0);
  NdjsonWriter nd(file(ctx, rec, "ergodic.ndjson"), ctx.hash);
  Summary t(ctx.screen, "ergodic");
  bool conv = true;
  for (auto method : {LambdaMethod::horizon_difference, LambdaMethod::discounted, LambdaMethod::stationary_formula}) {
    if (method == LambdaMethod::horizon_difference && p.horizons.size() < 2) continue;
    if (method == LambdaMethod::discounted && p.deltas.empty()) continue;
    auto e = estimate_lambda(c, cfg.sigma, method, m0, p);
    conv = conv && e.converged;
    const bool by_delta = method == LambdaMethod::discounted;
    for (std::size_t i = 0; i < e.estimates.size(); ++i)
      nd.write("ergodic", json{{"method", to_string(method)}, {by_delta ? "delta" : "horizon", e.ladder[i]}, {"lambda", e.estimates[i]}});
    nd.write("ergodic", json{{"method", to_string(method)},
                             {"lambda_hat", e.lambda_hat},
                             {"residual", std::isfinite(e.residual) ? json(e.residual) : json(nullptr)},
                             {"window", e.window},
                             {"converged", e.converged}});
    t.row("lambda " + to_string(method), e.lambda_hat);
  }
  auto st = estimate_stationary(c, cfg.sigma, m0, make_density(c.grid(), cfg.anchor), p);
  conv = conv && st.converged;
  DensityField law(c.grid());
  for (std::size_t i = 0; i < st.mu_bar.size(); ++i)
    for (int j = 0; j < law.size(); ++j) law[j] += st.weights[i] * st.mu_bar[i][j];
  write_field(file(ctx, rec, "ergodic_mu_bar.csv"), ctx.hash, law.values(), c.grid().h());
  nd.write("ergodic", json{{"stationary_horizon", st.horizon},
                           {"t_mid", st.t_mid},
                           {"anchor_gap", st.anchor_gap},
                           {"ladder_gap", std::isfinite(st.ladder_gap) ? json(st.ladder_gap) : json(nullptr)},
                           {"stabilized", st.stabilized}});
  t.row("stationary T", st.horizon);
  t.row("anchor gap", st.anchor_gap);
  t.row("ladder gap", st.ladder_gap);
  t.row("stabilized", st.stabilized ? "yes" : "no (flagged)");
  return conv ? ok : not_converged;
}

int task_discounted(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto p = make_ergodic_params(cfg);
  auto m0 = make_density(c.grid(), cfg.m0);
  NdjsonWriter nd(file(ctx, rec, "discounted.ndjson"), ctx.hash);
  Summary t(ctx.screen, "discounted");
  DiscountCaps caps = p.caps;
  caps.tail = TailClosure::self_consistent;
  bool conv = true;
  for (double d : cfg.deltas) {
    auto s = solve_discounted(c, cfg.sigma, d, m0, p.solve, caps);
    conv = conv && s.base.converged;
    const double lam = d * integral(s.base.u.slice(0, 0), c.grid().h());
    char name[48];
    std::snprintf(name, sizeof name, "discounted_u0_delta%g.csv", d);
    write_field(file(ctx, rec, name), ctx.hash, s.base.u.slice(0, 0), c.grid().h());
    nd.write("discounted", json{{"delta", d},
                                {"sup_delta_u0", discounted_value_sup(s)},
                                {"sup_f", running_cost_sup(c, s.base)},
                                {"lambda_delta", lam},
                                {"t_max", s.t_max},
                                {"capped", s.capped},
                                {"truncation_bound", s.truncation_error_bound},
                                {"converged", s.base.converged}});
    t.row("lambda at delta " + num(d), lam);
  }
  return conv ? ok : not_converged;
}

int task_linearize(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto tree = make_tree(cfg);
  auto sp = make_solve_params(cfg);
  auto m0 = make_density(c.grid(), cfg.m0);
  NdjsonWriter nd(file(ctx, rec, "linearize.ndjson"), ctx.hash);
  Summary t(ctx.screen, "linearize");
  auto base = solve_mfg_tree(c, tree, m0, Terminal::coupling(), sp);
  bool conv = base.converged;
  double worst_ratio = 0.0;
  for (int i = 0; i < cfg.directions; ++i) {
    auto rho = random_direction(c.grid(), cfg.seed + static_cast<std::uint64_t>(i));
    // Weight the direction by m0 and recentre it, so m0 + eps rho stays a
    // probability density whenever eps * (sup|rho| + |mean|) <= 1.
    double mean = 0;
    for (int j = 0; j < rho.size(); ++j) {
      rho[j] *= m0[j];
      mean += c.grid().h() * rho[j];
    }
    for (int j = 0; j < rho.size(); ++j) rho[j] -= mean * m0[j];
    json m{{"direction", i}, {"dual_norm", dual_norm(rho)}};
    if (i == 0) {
      auto r = derivative_check(c, tree, m0, rho, cfg.eps, sp);
      conv = conv && r.converged;
      m["errors"] = r.errors;
      m["ratios"] = r.ratios;
      m["slope"] = r.slope;
      m["z0_sup"] = sup_norm(r.z0);
      t.row("fd slope", r.slope);
      for (std::size_t q = 0; q < r.ratios.size(); ++q) t.row("error ratio " + std::to_string(q), r.ratios[q]);
    } else {
      auto lin = solve_linearized(base, c, rho, 0.0, sp);
      conv = conv && lin.converged;
      m["z0_sup"] = sup_norm(lin.z.slice(0, 0));
    }
    const double ratio = m["dual_norm"].get<double>() > 0 ? m["z0_sup"].get<double>() / m["dual_norm"].get<double>() : 0.0;
    m["z0_over_norm"] = ratio;
    worst_ratio = std::max(worst_ratio, ratio);
    nd.write("linearize", m);
  }
  t.row("max |z0| / |rho0|", worst_ratio);
  return conv ? ok : not_converged;
}

int task_corrector(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto p = make_ergodic_params(cfg);
  auto m0 = make_density(c.grid(), cfg.m0);
  if (p.horizons.size() < 2) throw ConfigError("ergodic.horizons", 0, "the corrector needs at least two horizons");
  auto lam = estimate_lambda(c, cfg.sigma, LambdaMethod::horizon_difference, m0, p);
  auto e = estimate_corrector(c, cfg.sigma, m0, lam.lambda_hat, {}, p);
  write_field(file(ctx, rec, "corrector_chi.csv"), ctx.hash, e.chi.values(), c.grid().h());
  write_series(file(ctx, rec, "corrector_gaps.csv"), ctx.hash, indexed(e.gaps));
  NdjsonWriter nd(file(ctx, rec, "corrector.ndjson"), ctx.hash);
  nd.write("corrector", json{{"lambda_hat", lam.lambda_hat}, {"gaps", e.gaps}, {"c_hat", e.c_hat}, {"stabilized", e.stabilized}});
  Summary t(ctx.screen, "corrector");
  t.row("lambda_hat", lam.lambda_hat);
  t.row("last sup gap", e.gaps.empty() ? 0.0 : e.gaps.back());
  t.row("c_hat", e.c_hat);
  t.row("stabilized", e.stabilized ? "yes" : "no (flagged)");
  return lam.converged && e.converged ? ok : not_converged;
}

int task_master_probe(TaskContext& ctx, RunRecord& rec) {
  const auto& cfg = ctx.cfg;
  auto c = make_coupling(cfg);
  auto p = make_ergodic_params(cfg);
  auto m0 = make_density(c.grid(), cfg.m0);
  auto m1 = make_density(c.grid(), cfg.anchor);
  auto lam = estimate_lambda(c, cfg.sigma, LambdaMethod::horizon_difference, m0, p);
  NdjsonWriter nd(file(ctx, rec, "master_probe.ndjson"), ctx.hash);
  Summary t(ctx.screen, "master-probe");
  bool conv = lam.converged;

  // differences U(-T, x, m0) - U(-T, x, m1) along the probe ladder
  std::vector<ValueField> diffs;
  for (double T : cfg.probe_horizons) {
    auto a = evaluate_master(c, cfg.sigma, T, m0, p, &conv);
    auto b = evaluate_master(c, cfg.sigma, T, m1, p, &conv);
    diffs.push_back(a - b);
  }
  for (std::size_t i = 0; i + 1 < diffs.size(); ++i) {
    const double gap = sup_norm((diffs[i + 1] - diffs[i]).values());
    nd.write("master-probe", json{{"horizon", cfg.probe_horizons[i]}, {"next_horizon", cfg.probe_horizons[i + 1]}, {"difference_gap", gap}});
    t.row("difference gap T=" + num(cfg.probe_horizons[i]), gap);
  }

  ErgodicParams q = p;
  q.horizons = cfg.probe_horizons;
  auto r = corollary_probe(c, cfg.sigma, m0, cfg.t_grid, lam.lambda_hat, cfg.t_ref, q, cfg.refresh_steps);
  conv = conv && r.converged;
  for (std::size_t i = 0; i < r.horizons.size(); ++i) {
    Series s;
    for (std::size_t k = 0; k < r.t_grid.size(); ++k) s.push(r.t_grid[k], r.gaps[i][k]);
    char name[48];
    std::snprintf(name, sizeof name, "master_probe_gap_T%g.csv", r.horizons[i]);
    write_series(file(ctx, rec, name), ctx.hash, s);
    double sup = 0;
    for (double g : r.gaps[i]) sup = std::max(sup, g);
    nd.write("master-probe", json{{"horizon", r.horizons[i]}, {"corollary_gaps", r.gaps[i]}, {"sup_gap", sup}});
    t.row("corollary gap T=" + num(r.horizons[i]), sup);
  }
  return conv ? ok : not_converged;
}

}  // namespace

int run_task(const std::string& task, TaskContext& ctx, RunRecord& rec) {
  rec.task = task;
  rec.config_hash = ctx.hash;
  if (task == "solve") return task_solve(ctx, rec);
  if (task == "turnpike") return task_turnpike(ctx, rec);
  if (task == "ergodic") return task_ergodic(ctx, rec);
  if (task == "discounted") return task_discounted(ctx, rec);
  if (task == "linearize") return task_linearize(ctx, rec);
  if (task == "corrector") return task_corrector(ctx, rec);
  if (task == "master-probe") return task_master_probe(ctx, rec);
  if (task == "check") return run_checks(ctx, rec);
  throw ConfigError("task", 0, "unknown task '" + task + "'");
}

}  // namespace mfgcn::cli
