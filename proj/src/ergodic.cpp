#include "mfgcn/ergodic.hpp"

#include <algorithm>
#include <cmath>

namespace mfgcn {

namespace {

int steps_for(double t, double dt) { return static_cast<int>(std::lround(t / dt)); }

// Every solve in this file goes through here; `ok` collects convergence.
MFGTreeSolution solve_checked(const CouplingSpec& c, const NoiseTree& tree, const DensityField& m0, const SolveParams& p, bool& ok) {
  MFGTreeSolution s = solve_mfg_tree(c, tree, m0, Terminal::coupling(), p);
  ok = ok && s.converged;
  return s;
}

// Owner depth and first step of the averaging window for the stationary
// quantities. A collapsed tree uses the single step N/2.
struct Window {
  int depth, start, length;
};

Window stationary_window(const NoiseTree& tree) {
  if (tree.epochs() == 0) return {0, tree.total_steps() / 2, 1};
  const int d = tree.epochs() / 2;
  const int start = tree.first_step(NoiseTree::node_id(d, 0));
  return {d, start, d == 0 ? tree.lead_steps() : tree.fine_steps()};
}

// E[h sum (f(m_k) - H(D u_{k+1}))] averaged over the window. Each step of the
// backward scheme lowers the expected mean of u by exactly dt times this.
double window_rate(const CouplingSpec& c, const MFGTreeSolution& s, const Window& w) {
  const Grid& g = s.grid();
  const double h = g.h();
  std::vector<double> f(static_cast<std::size_t>(g.n())), ham(f.size());
  const int first = NoiseTree::node_id(w.depth, 0);
  const int count = 1 << w.depth;
  double acc = 0.0;
  for (int j = 0; j < w.length; ++j) {
    double step = 0.0;
    for (int id = first; id < first + count; ++id) {
      const int local = w.start + j - s.tree.first_step(id);
      c.eval_into(Which::f, s.m.slice(id, local), f);
      godunov_hamiltonian(s.u.slice(id, local + 1), h, ham);
      double sum = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) sum += f[i] - ham[i];
      step += s.tree.node_prob(id) * h * sum;
    }
    acc += step;
  }
  return acc / w.length;
}

DensityField expected_law(const MFGTreeSolution& s, int depth, int step) {
  DensityField law(s.grid());
  const int first = NoiseTree::node_id(depth, 0);
  for (int id = first; id < first + (1 << depth); ++id) {
    auto m = s.m.slice(id, local_slice(s.tree, id, step));
    const double w = s.tree.node_prob(id);
    for (int j = 0; j < law.size(); ++j) law[j] += w * m[static_cast<std::size_t>(j)];
  }
  return law;
}

}  // namespace

NoiseTree horizon_tree(double sigma, double horizon, const ErgodicParams& p, double phase) {
  if (!(horizon > 0.0) || !(p.dt > 0.0)) throw Error("ergodic: horizon and dt must be positive");
  if (sigma == 0.0) return NoiseTree::build(0.0, horizon, 0, std::max(1, steps_for(horizon, p.dt)));
  return build_phased_tree(sigma, p.epoch_len, p.dt, phase, horizon);
}

int midpoint_step(const NoiseTree& tree) {
  Window w = stationary_window(tree);
  return tree.epochs() == 0 ? w.start : w.start + w.length / 2;
}

StationaryEstimate estimate_stationary(const CouplingSpec& c, double sigma, const DensityField& anchor1, const DensityField& anchor2,
                                       const ErgodicParams& p) {
  if (p.horizons.empty()) throw Error("stationary estimate: empty horizon ladder");
  StationaryEstimate out;
  std::optional<DensityField> prev_law;
  for (std::size_t i = 0; i < p.horizons.size(); ++i) {
    const double T = p.horizons[i];
    NoiseTree tree = horizon_tree(sigma, T, p);
    bool ok = true;
    MFGTreeSolution s1 = solve_checked(c, tree, anchor1, p.solve, ok);
    MFGTreeSolution s2 = solve_checked(c, tree, anchor2, p.solve, ok);
    out.converged = out.converged && ok;
    const Window w = stationary_window(tree);
    const int k = midpoint_step(tree);

    double gap = 0.0;
    const int first = NoiseTree::node_id(w.depth, 0);
    for (int id = first; id < first + (1 << w.depth); ++id) {
      const int local = local_slice(tree, id, k);
      gap += tree.node_prob(id) * wasserstein1_samples(s1.m.slice(id, local), s2.m.slice(id, local), c.grid().h());
    }
    DensityField law = expected_law(s1, w.depth, k);
    const double ladder_gap = prev_law ? wasserstein1(law, *prev_law) : INFINITY;
    prev_law = law;

    out.mu_bar.clear();
    out.v_bar.clear();
    out.weights.clear();
    for (int id = first; id < first + (1 << w.depth); ++id) {
      const int local = local_slice(tree, id, k);
      out.mu_bar.push_back(s1.m.field(id, local));
      out.v_bar.push_back(gradient_upwind(s1.u.field(id, local)).plus);
      out.weights.push_back(tree.node_prob(id));
    }
    out.t_mid = k * tree.dt();
    out.horizon = tree.horizon();
    out.step = w.start;
    out.window = w.length;
    out.anchor_gap = gap;
    out.ladder_gap = ladder_gap;
    out.stabilized = i > 0 && gap <= p.stationarity_tol && ladder_gap <= p.stationarity_tol && ok;
    out.solution = std::move(s1);
    if (out.stabilized) break;
  }
  return out;
}

std::string to_string(LambdaMethod m) {
  switch (m) {
    case LambdaMethod::horizon_difference:
      return "horizon_difference";
    case LambdaMethod::discounted:
      return "discounted";
    case LambdaMethod::stationary_formula:
      return "stationary_formula";
  }
  return "?";
}

double stationary_formula(const CouplingSpec& c, const StationaryEstimate& st) {
  const Window w{st.solution->tree.depth_at_step(st.step), st.step, st.window};
  if (!st.solution) throw Error("stationary formula: empty estimate");
  return window_rate(c, *st.solution, w);
}

ErgodicEstimate estimate_lambda(const CouplingSpec& c, double sigma, LambdaMethod method, const DensityField& m0, const ErgodicParams& p) {
  ErgodicEstimate out;
  out.method = method;
  const double h = c.grid().h();
  switch (method) {
    case LambdaMethod::horizon_difference: {
      if (p.horizons.size() < 2) throw Error("horizon difference: need at least two horizons");
      double prev_T = 0.0, prev_mean = 0.0;
      for (std::size_t i = 0; i < p.horizons.size(); ++i) {
        NoiseTree tree = horizon_tree(sigma, p.horizons[i], p);
        MFGTreeSolution s = solve_checked(c, tree, m0, p.solve, out.converged);
        const double mean = integral(s.u.slice(0, 0), h);
        if (i > 0) {
          out.ladder.push_back(tree.horizon());
          out.estimates.push_back((mean - prev_mean) / (tree.horizon() - prev_T));
          out.window = tree.horizon() - prev_T;
        }
        prev_T = tree.horizon();
        prev_mean = mean;
      }
      break;
    }
    case LambdaMethod::discounted: {
      if (p.deltas.empty()) throw Error("discounted estimate: empty delta grid");
      std::vector<double> deltas = p.deltas;
      std::sort(deltas.begin(), deltas.end(), std::greater<>());
      DiscountCaps caps = p.caps;
      caps.tail = TailClosure::self_consistent;
      for (double d : deltas) {
        DiscountedSolution s = solve_discounted(c, sigma, d, m0, p.solve, caps);
        out.converged = out.converged && s.base.converged;
        out.ladder.push_back(d);
        out.estimates.push_back(d * integral(s.base.u.slice(0, 0), h));
        out.window = s.t_max;
      }
      break;
    }
    case LambdaMethod::stationary_formula: {
      if (p.horizons.empty()) throw Error("stationary formula: empty horizon ladder");
      for (double T : p.horizons) {
        NoiseTree tree = horizon_tree(sigma, T, p);
        MFGTreeSolution s = solve_checked(c, tree, m0, p.solve, out.converged);
        const Window w = stationary_window(tree);
        out.ladder.push_back(tree.horizon());
        out.estimates.push_back(window_rate(c, s, w));
        out.window = w.length * tree.dt();
      }
      break;
    }
  }
  out.lambda_hat = out.estimates.back();
  out.residual = out.estimates.size() > 1 ? std::abs(out.estimates.back() - out.estimates[out.estimates.size() - 2]) : INFINITY;
  return out;
}

double terminal_phase(double sigma, double horizon, const ErgodicParams& p) {
  if (sigma == 0.0) return 0.0;
  const int fine = std::max(1, steps_for(p.epoch_len, p.dt));
  const double h_t = p.epoch_len / fine;
  const int total = steps_for(horizon, h_t);
  return ((fine - total % fine) % fine) * h_t;
}

ValueField evaluate_master(const CouplingSpec& c, double sigma, double horizon, const DensityField& m, const ErgodicParams& p, bool* converged) {
  NoiseTree tree = horizon_tree(sigma, horizon, p, terminal_phase(sigma, horizon, p));
  bool ok = true;
  ValueField u = solve_checked(c, tree, m, p.solve, ok).u0();
  if (converged) *converged = *converged && ok;
  return u;
}

CorrectorEstimate estimate_corrector(const CouplingSpec& c, double sigma, const DensityField& m, double lambda_hat, const Normalization& norm,
                                     const ErgodicParams& p) {
  if (p.horizons.empty()) throw Error("corrector: empty horizon ladder");
  const Grid& g = c.grid();
  if (norm.x_ref < 0 || norm.x_ref >= g.n()) throw Error("corrector: reference point outside the grid");
  const DensityField m_ref = norm.m_ref ? *norm.m_ref : uniform_density(g);
  const bool same = m_ref.data() == m.data();

  CorrectorEstimate out{ValueField(g), {}, 0.0, false};
  std::optional<ValueField> prev;
  for (double T : p.horizons) {
    ValueField u = evaluate_master(c, sigma, T, m, p, &out.converged);
    const double ref = same ? u[norm.x_ref] : evaluate_master(c, sigma, T, m_ref, p, &out.converged)[norm.x_ref];
    ValueField chi(g);
    for (int j = 0; j < g.n(); ++j) chi[j] = u[j] - ref;
    if (prev) {
      double gap = 0.0;
      for (int j = 0; j < g.n(); ++j) gap = std::max(gap, std::abs(chi[j] - (*prev)[j]));
      out.gaps.push_back(gap);
    }
    prev = chi;
    out.chi = chi;
    out.c_hat = ref - lambda_hat * horizon_tree(sigma, T, p).horizon();
  }
  out.stabilized = !out.gaps.empty() && out.gaps.back() <= p.stationarity_tol;
  return out;
}

CorollaryReport corollary_probe(const CouplingSpec& c, double sigma, const DensityField& m0, const std::vector<double>& t_grid,
                                double lambda_hat, double t_ref, const ErgodicParams& p, int refresh_steps) {
  if (p.horizons.empty() || t_grid.empty()) throw Error("corollary probe: empty ladder or time grid");
  if (refresh_steps < 1) throw Error("corollary probe: refresh_steps must be positive");
  const Grid& g = c.grid();
  const double dt = sigma > 0.0 ? p.epoch_len / std::max(1, steps_for(p.epoch_len, p.dt)) : p.dt;
  std::vector<int> ks;
  for (double t : t_grid) {
    const int k = steps_for(t, dt);
    if (k < 0) throw Error("corollary probe: negative time");
    if (sigma > 0.0 && k >= steps_for(p.epoch_len, dt)) throw Error("corollary probe: times must lie in the first epoch");
    if (k >= steps_for(p.horizons.front(), dt)) throw Error("corollary probe: times must lie before the smallest horizon");
    ks.push_back(k);
  }
  const int k_max = *std::max_element(ks.begin(), ks.end());
  const double period = sigma > 0.0 ? p.epoch_len : 0.0;

  // Remaining horizon for the predicted value at time t, aligned with the
  // terminal phase of the horizon-T run so the additive constants agree.
  auto aligned_ref = [&](double T, double t) {
    if (period == 0.0) return t_ref;
    const double rem = T - t;
    const double cycles = std::ceil((t_ref - rem) / period - 1e-9);
    return rem + cycles * period;
  };

  // mbar: re-solve from the current state every refresh_steps and follow the
  // equilibrium path in between, so each step uses the slope at k + 1.
  bool converged = true;
  std::vector<DensityField> mbar{m0};
  mbar.reserve(static_cast<std::size_t>(k_max) + 1);
  while (static_cast<int>(mbar.size()) <= k_max) {
    const int k = static_cast<int>(mbar.size()) - 1;
    NoiseTree tree = horizon_tree(sigma, t_ref, p, k * dt);
    MFGTreeSolution s = solve_checked(c, tree, mbar.back(), p.solve, converged);
    const int r = std::min({refresh_steps, k_max - k, tree.slice_count(0) - 1});
    for (int j = 1; j <= r; ++j) mbar.push_back(s.m.field(0, j));
  }

  CorollaryReport out;
  out.converged = converged;
  out.t_grid = t_grid;
  out.t_ref = t_ref;
  for (double T : p.horizons) {
    NoiseTree tree = horizon_tree(sigma, T, p);
    MFGTreeSolution s = solve_checked(c, tree, m0, p.solve, out.converged);
    const double Th = tree.horizon();
    std::vector<double> row;
    for (std::size_t q = 0; q < ks.size(); ++q) {
      const int k = ks[q];
      const double t = k * dt;
      const double ref = aligned_ref(Th, t);
      ValueField pred = evaluate_master(c, sigma, ref, mbar[static_cast<std::size_t>(k)], p, &out.converged);
      auto u = s.u.slice(0, k);
      double gap = 0.0;
      for (int j = 0; j < g.n(); ++j) {
        const double lhs = u[static_cast<std::size_t>(j)] - lambda_hat * (Th - t);
        const double rhs = pred[j] - lambda_hat * ref;
        gap = std::max(gap, std::abs(lhs - rhs));
      }
      row.push_back(gap);
    }
    out.horizons.push_back(Th);
    out.gaps.push_back(std::move(row));
  }
  return out;
}

}  // namespace mfgcn
