#include "mfgcn/mfg_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfgcn {

double cfl_limit(double cfl_factor, double h, double max_du) { return cfl_factor * h / (max_du + 1.0); }

double max_abs_gradient(std::span<const double> u, double h) {
  const std::size_t n = u.size();
  double g = std::abs(u[0] - u[n - 1]);
  for (std::size_t j = 1; j < n; ++j) g = std::max(g, std::abs(u[j] - u[j - 1]));
  return g / h;
}

void godunov_hamiltonian(std::span<const double> u, double h, std::span<double> out) {
  const std::size_t n = u.size();
  const double ih = 1.0 / h;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    std::size_t jm = j == 0 ? n - 1 : j - 1;
    double pm = std::max((u[j] - u[jm]) * ih, 0.0);
    double pp = std::min((u[jp] - u[j]) * ih, 0.0);
    out[j] = 0.5 * (pm * pm + pp * pp);
  }
}

void adjoint_drift(std::span<const double> p, std::span<const double> u, double h, std::span<double> out) {
  const std::size_t n = u.size();
  const double ih = 1.0 / h;
  // flux through the face j+1/2: mass moves right at speed -b_j >= 0 from j,
  // left at speed a_{j+1} >= 0 from j+1
  auto a = [&](std::size_t j) {
    std::size_t jm = j == 0 ? n - 1 : j - 1;
    return std::max((u[j] - u[jm]) * ih, 0.0);
  };
  auto b = [&](std::size_t j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    return std::min((u[jp] - u[j]) * ih, 0.0);
  };
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    std::size_t jm = j == 0 ? n - 1 : j - 1;
    out[j] = ih * (p[j] * a(j) - p[j] * b(j) - p[jp] * a(jp) + p[jm] * b(jm));
  }
}

void hamiltonian_derivative(std::span<const double> u, std::span<const double> z, double h, std::span<double> out) {
  const std::size_t n = u.size();
  const double ih = 1.0 / h;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    std::size_t jm = j == 0 ? n - 1 : j - 1;
    double a = std::max((u[j] - u[jm]) * ih, 0.0);
    double b = std::min((u[jp] - u[j]) * ih, 0.0);
    out[j] = a * (z[j] - z[jm]) * ih + b * (z[jp] - z[j]) * ih;
  }
}

void adjoint_drift_derivative(std::span<const double> p, std::span<const double> u, std::span<const double> z, double h,
                              std::span<double> out) {
  const std::size_t n = u.size();
  const double ih = 1.0 / h;
  auto da = [&](std::size_t j) {
    std::size_t jm = j == 0 ? n - 1 : j - 1;
    return u[j] - u[jm] > 0.0 ? (z[j] - z[jm]) * ih : 0.0;
  };
  auto db = [&](std::size_t j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    return u[jp] - u[j] < 0.0 ? (z[jp] - z[j]) * ih : 0.0;
  };
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    std::size_t jm = j == 0 ? n - 1 : j - 1;
    out[j] = ih * (p[j] * da(j) - p[j] * db(j) - p[jp] * da(jp) + p[jm] * db(jm));
  }
}

void hj_step_into(const DiffusionSolver& s, std::span<const double> u_next, std::span<const double> f_now, double dt, double delta,
                  std::span<double> out) {
  const double h = s.grid().h();
  godunov_hamiltonian(u_next, h, out);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = u_next[j] + dt * (f_now[j] - out[j] - delta * u_next[j]);
  s.solve_in_place(out);
}

void fp_step_into(const DiffusionSolver& s, std::span<const double> m_now, std::span<const double> u_next, double dt, std::span<double> out,
                  std::span<double> scratch) {
  const double h = s.grid().h();
  std::copy(m_now.begin(), m_now.end(), scratch.begin());
  s.solve_in_place(scratch);
  adjoint_drift(scratch, u_next, h, out);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = scratch[j] - dt * out[j];
}

namespace {

void require_cfl(double dt, double cfl_factor, double h, double max_du) {
  if (dt > cfl_limit(cfl_factor, h, max_du))
    throw CflViolation("CFL violated: dt = " + std::to_string(dt) + " exceeds " + std::to_string(cfl_limit(cfl_factor, h, max_du)) +
                       " (max|Du| = " + std::to_string(max_du) + ")");
}

}  // namespace

ValueField hj_backward_step(const ValueField& u_next, const ValueField& f_now, double dt, double delta, double cfl_factor) {
  if (!(u_next.grid() == f_now.grid())) throw GridMismatch();
  if (dt <= 0.0 || delta < 0.0) throw Error("hj step: need dt > 0 and delta >= 0");
  require_cfl(dt, cfl_factor, u_next.grid().h(), max_abs_gradient(u_next.values(), u_next.grid().h()));
  ValueField out(u_next.grid());
  hj_step_into(DiffusionSolver(u_next.grid(), dt), u_next.values(), f_now.values(), dt, delta, out.values());
  return out;
}

DensityField fp_forward_step(const DensityField& m_now, const UpwindGradient& drift, double dt, double cfl_factor) {
  const Grid& g = m_now.grid();
  if (!(g == drift.plus.grid()) || !(g == drift.minus.grid())) throw GridMismatch();
  for (int j = 0; j < g.n(); ++j)
    if (m_now[j] < 0.0) throw Error("fp step: negative input density");
  double max_du = std::max(sup_norm(drift.plus.values()), sup_norm(drift.minus.values()));
  require_cfl(dt, cfl_factor, g.h(), max_du);
  // rebuild a potential with the requested one-sided slopes; the flux only
  // needs a_j = max(D-u_j, 0) and b_j = min(D+u_j, 0)
  const int n = g.n();
  const double ih = 1.0 / g.h();
  DiffusionSolver s(g, dt);
  std::vector<double> p(m_now.data());
  s.solve_in_place(p);
  DensityField out(g);
  for (int j = 0; j < n; ++j) {
    int jp = j + 1 == n ? 0 : j + 1;
    int jm = j == 0 ? n - 1 : j - 1;
    auto a = [&](int i) { return std::max(drift.minus[i], 0.0); };
    auto b = [&](int i) { return std::min(drift.plus[i], 0.0); };
    double bj = ih * (p[static_cast<std::size_t>(j)] * a(j) - p[static_cast<std::size_t>(j)] * b(j) -
                      p[static_cast<std::size_t>(jp)] * a(jp) + p[static_cast<std::size_t>(jm)] * b(jm));
    out[j] = p[static_cast<std::size_t>(j)] - dt * bj;
  }
  return out;
}

ValueField branch_average_backward(const ValueField& u_plus, const ValueField& u_minus, double s) {
  if (!(u_plus.grid() == u_minus.grid())) throw GridMismatch();
  ValueField out = translate(u_plus, -s);
  out += translate(u_minus, s);
  out *= 0.5;
  return out;
}

DensityField branch_push_forward(const DensityField& m, double s_signed) { return translate(m, s_signed); }

// ---------------------------------------------------------------------------

double MFGTreeSolution::expect_at_step(int k, const std::function<double(int, std::span<const double>, std::span<const double>)>& fn) const {
  const int depth = tree.depth_at_step(k);
  const int first = NoiseTree::node_id(depth, 0);
  const int count = 1 << depth;
  const double p = std::ldexp(1.0, -depth);
  double acc = 0.0;
  for (int i = 0; i < count; ++i) {
    int id = first + i;
    int j = local_slice(tree, id, k);
    acc += p * fn(id, u.slice(id, j), m.slice(id, j));
  }
  return acc;
}

namespace {

class Sweeper {
 public:
  Sweeper(const CouplingSpec& c, const NoiseTree& tree, const Terminal& term, const SolveParams& p)
      : c_(c), tree_(tree), term_(term), p_(p), grid_(c.grid()), diff_(c.grid(), tree.dt()), n_(static_cast<std::size_t>(c.grid().n())) {
    if (!term.use_coupling) {
      const std::size_t want = static_cast<std::size_t>(tree.leaf_count());
      if (term.leaf_fields.size() != 1 && term.leaf_fields.size() != want) throw Error("terminal: need one field or one per leaf");
      for (const auto& f : term.leaf_fields)
        if (!(f.grid() == grid_)) throw GridMismatch();
    }
  }

  bool shifted() const { return p_.frame == Frame::shifted; }
  double jump(int child) const {
    if (shifted()) return 0.0;
    return (child % 2 == 1) ? tree_.step() : -tree_.step();
  }

  // coupling value at a node, in the node's working frame
  void running_cost(int id, std::span<const double> m, std::span<double> out, std::vector<double>& tmp) const {
    if (!shifted()) {
      c_.eval_into(Which::f, m, out);
      return;
    }
    double sft = tree_.node_shift(id);
    tmp.resize(2 * n_);
    std::span<double> phys(tmp.data(), n_), fval(tmp.data() + n_, n_);
    translate_density_samples(m, grid_.h(), sft, phys);
    c_.eval_into(Which::f, phys, fval);
    translate_samples(fval, grid_.h(), -sft, out);
  }

  void terminal_value(int id, std::span<const double> m, std::span<double> out, std::vector<double>& tmp) const {
    const double sft = shifted() ? tree_.node_shift(id) : 0.0;
    tmp.resize(2 * n_);
    std::span<double> phys(tmp.data(), n_), gval(tmp.data() + n_, n_);
    if (term_.use_coupling) {
      if (sft == 0.0) {
        c_.eval_into(Which::g, m, out);
        return;
      }
      translate_density_samples(m, grid_.h(), sft, phys);
      c_.eval_into(Which::g, phys, gval);
    } else {
      std::size_t leaf = term_.leaf_fields.size() == 1 ? 0 : static_cast<std::size_t>(id - tree_.first_leaf());
      auto src = term_.leaf_fields[leaf].values();
      if (sft == 0.0) {
        std::copy(src.begin(), src.end(), out.begin());
        return;
      }
      std::copy(src.begin(), src.end(), gval.begin());
    }
    translate_samples(gval, grid_.h(), -sft, out);
  }

  // Backward sweep for a frozen density flow. Returns max |Du| over slices.
  double backward(const TreeField<DensityTag>& mbar, TreeField<ValueTag>& u) const {
    const int K = tree_.epochs();
    std::vector<double> grad(static_cast<std::size_t>(tree_.node_count()), 0.0);
    for (int depth = K; depth >= 0; --depth) {
      const int first = NoiseTree::node_id(depth, 0);
      const int count = 1 << depth;
#pragma omp parallel for schedule(static) if (p_.parallel && count > 1)
      for (int i = 0; i < count; ++i) {
        const int id = first + i;
        std::vector<double> tmp, f(n_);
        const int last = u.slices(id) - 1;
        if (depth == K) {
          terminal_value(id, mbar.last(id), u.last(id), tmp);
        } else {
          auto up = u.slice(NoiseTree::child_plus(id), 0);
          auto um = u.slice(NoiseTree::child_minus(id), 0);
          auto out = u.last(id);
          tmp.resize(2 * n_);
          std::span<double> a(tmp.data(), n_), b(tmp.data() + n_, n_);
          translate_samples(up, grid_.h(), -jump(NoiseTree::child_plus(id)), a);
          translate_samples(um, grid_.h(), -jump(NoiseTree::child_minus(id)), b);
          for (std::size_t j = 0; j < n_; ++j) out[j] = 0.5 * (a[j] + b[j]);
        }
        double g = max_abs_gradient(u.slice(id, last), grid_.h());
        for (int k = last - 1; k >= 0; --k) {
          running_cost(id, mbar.slice(id, k), f, tmp);
          hj_step_into(diff_, u.slice(id, k + 1), f, tree_.dt(), p_.delta, u.slice(id, k));
          g = std::max(g, max_abs_gradient(u.slice(id, k), grid_.h()));
        }
        grad[static_cast<std::size_t>(id)] = g;
      }
    }
    double g = 0.0;
    for (double x : grad) g = std::max(g, x);
    return g;
  }

  void forward(const TreeField<ValueTag>& u, std::span<const double> m0, TreeField<DensityTag>& m) const {
    const int K = tree_.epochs();
    for (int depth = 0; depth <= K; ++depth) {
      const int first = NoiseTree::node_id(depth, 0);
      const int count = 1 << depth;
#pragma omp parallel for schedule(static) if (p_.parallel && count > 1)
      for (int i = 0; i < count; ++i) {
        const int id = first + i;
        std::vector<double> scratch(n_);
        if (depth == 0) {
          std::copy(m0.begin(), m0.end(), m.slice(id, 0).begin());
        } else {
          translate_density_samples(m.last(NoiseTree::parent(id)), grid_.h(), jump(id), m.slice(id, 0));
        }
        for (int k = 0; k + 1 < m.slices(id); ++k) fp_step_into(diff_, m.slice(id, k), u.slice(id, k + 1), tree_.dt(), m.slice(id, k + 1), scratch);
      }
    }
  }

  // Converts shifted-frame fields back to the lab frame.
  void to_lab(TreeField<ValueTag>& u, TreeField<DensityTag>& m) const {
    if (!shifted()) return;
    std::vector<double> tmp(n_);
    for (int id = 0; id < tree_.node_count(); ++id) {
      double sft = tree_.node_shift(id);
      if (sft == 0.0) continue;
      for (int k = 0; k < u.slices(id); ++k) {
        translate_samples(u.slice(id, k), grid_.h(), sft, tmp);
        std::copy(tmp.begin(), tmp.end(), u.slice(id, k).begin());
        translate_density_samples(m.slice(id, k), grid_.h(), sft, tmp);
        std::copy(tmp.begin(), tmp.end(), m.slice(id, k).begin());
      }
    }
  }

 private:
  const CouplingSpec& c_;
  const NoiseTree& tree_;
  const Terminal& term_;
  const SolveParams& p_;
  Grid grid_;
  DiffusionSolver diff_;
  std::size_t n_;
};

double damping_weight(const SolveParams& p, int it) {
  if (p.damping == Damping::fictitious_play) return 2.0 / (it + 2.0);
  return p.theta;
}

void check_params(const SolveParams& p) {
  if (!(p.tol > 0.0)) throw Error("solver: tol must be positive");
  if (p.max_iters < 1) throw Error("solver: max_iters must be at least 1");
  if (p.damping == Damping::fixed && !(p.theta > 0.0 && p.theta <= 1.0)) throw Error("solver: theta must lie in (0, 1]");
  if (p.delta < 0.0) throw Error("solver: negative discount");
}

double l1_gap(std::span<const double> a, std::span<const double> b, double h) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]);
  return h * s;
}

double sup_gap(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s = std::max(s, std::abs(a[j] - b[j]));
  return s;
}

void note_residual(std::vector<double>& hist, int& increases, int burn_in, double r) {
  if (static_cast<int>(hist.size()) > burn_in && r > 1.05 * hist.back()) ++increases;
  hist.push_back(r);
}

}  // namespace

MFGTreeSolution solve_mfg_tree(const CouplingSpec& c, const NoiseTree& tree, const DensityField& m0, const Terminal& terminal,
                               const SolveParams& p) {
  check_params(p);
  if (!(c.grid() == m0.grid())) throw GridMismatch();
  validate_density(m0);
  const Grid grid = c.grid();
  const double h = grid.h();
  Sweeper sw(c, tree, terminal, p);

  MFGTreeSolution sol{tree, TreeField<ValueTag>(tree, grid), TreeField<DensityTag>(tree, grid), {}, 0, false, 0, 0.0, p, terminal};
  TreeField<DensityTag> mbar(tree, grid), mnew(tree, grid);
  TreeField<ValueTag> u(tree, grid), uprev(tree, grid);

  if (p.init == InitialGuess::heat_flow) {
    sw.forward(uprev, m0.values(), mbar);
  } else {
    std::fill(mbar.raw().begin(), mbar.raw().end(), 1.0);
    std::copy(m0.values().begin(), m0.values().end(), mbar.slice(0, 0).begin());
  }

  const int nodes = tree.node_count();
  std::vector<double> node_l1(static_cast<std::size_t>(nodes)), node_sup(static_cast<std::size_t>(nodes));
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < p.max_iters; ++it) {
    double max_du = sw.backward(mbar, u);
    if (!std::isfinite(max_du)) throw Error("solver: value function blew up");
    require_cfl(tree.dt(), p.cfl_factor, h, max_du);
    sw.forward(u, m0.values(), mnew);

#pragma omp parallel for schedule(static) if (p.parallel)
    for (int id = 0; id < nodes; ++id) {
      double l1 = 0.0, sup = 0.0;
      for (int k = 0; k < u.slices(id); ++k) {
        l1 = std::max(l1, l1_gap(mnew.slice(id, k), mbar.slice(id, k), h));
        sup = std::max(sup, sup_gap(u.slice(id, k), uprev.slice(id, k)));
      }
      node_l1[static_cast<std::size_t>(id)] = l1;
      node_sup[static_cast<std::size_t>(id)] = sup;
    }
    double l1 = 0.0, sup = 0.0;
    for (int id = 0; id < nodes; ++id) {
      l1 = std::max(l1, node_l1[static_cast<std::size_t>(id)]);
      sup = std::max(sup, node_sup[static_cast<std::size_t>(id)]);
    }
    const double r = l1 + sup;
    if (!std::isfinite(r)) throw Error("solver: non-finite residual");
    note_residual(sol.residuals, sol.residual_increases, p.burn_in, r);
    sol.iterations = it + 1;

    if (r < best) {
      best = r;
      sol.u.raw() = u.raw();
      sol.m.raw() = mnew.raw();
      sol.max_gradient = max_du;
    }
    if (r <= p.tol) {
      sol.converged = true;
      break;
    }
    const double beta = damping_weight(p, it);
    auto& mb = mbar.raw();
    const auto& mn = mnew.raw();
    for (std::size_t q = 0; q < mb.size(); ++q) mb[q] = (1.0 - beta) * mb[q] + beta * mn[q];
    std::swap(uprev.raw(), u.raw());
  }
  sw.to_lab(sol.u, sol.m);
  return sol;
}

DeterministicSolution solve_mfg_deterministic(const CouplingSpec& c, double horizon, int steps, const DensityField& m0,
                                              const Terminal& terminal, const SolveParams& p) {
  check_params(p);
  if (!(c.grid() == m0.grid())) throw GridMismatch();
  if (steps < 1 || !(horizon > 0.0)) throw Error("deterministic solver: need steps >= 1 and horizon > 0");
  validate_density(m0);
  const Grid grid = c.grid();
  const double h = grid.h();
  const double dt = horizon / steps;
  const std::size_t n = static_cast<std::size_t>(grid.n());
  const std::size_t N = static_cast<std::size_t>(steps);
  DiffusionSolver diff(grid, dt);

  using Traj = std::vector<std::vector<double>>;
  Traj mbar(N + 1, std::vector<double>(n)), mnew = mbar, u = mbar, uprev = mbar;
  std::vector<double> f(n), scratch(n);

  auto forward = [&](const Traj& uu, Traj& mm) {
    std::copy(m0.values().begin(), m0.values().end(), mm[0].begin());
    for (std::size_t k = 0; k < N; ++k) fp_step_into(diff, mm[k], uu[k + 1], dt, mm[k + 1], scratch);
  };

  if (p.init == InitialGuess::heat_flow) {
    forward(uprev, mbar);
  } else {
    for (auto& s : mbar) std::fill(s.begin(), s.end(), 1.0);
    std::copy(m0.values().begin(), m0.values().end(), mbar[0].begin());
  }

  DeterministicSolution sol;
  int increases = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < p.max_iters; ++it) {
    if (terminal.use_coupling) {
      c.eval_into(Which::g, mbar[N], u[N]);
    } else {
      if (terminal.leaf_fields.size() != 1) throw Error("terminal: need exactly one field");
      auto src = terminal.leaf_fields[0].values();
      std::copy(src.begin(), src.end(), u[N].begin());
    }
    double max_du = max_abs_gradient(u[N], h);
    for (std::size_t k = N; k-- > 0;) {
      c.eval_into(Which::f, mbar[k], f);
      hj_step_into(diff, u[k + 1], f, dt, p.delta, u[k]);
      max_du = std::max(max_du, max_abs_gradient(u[k], h));
    }
    if (!std::isfinite(max_du)) throw Error("solver: value function blew up");
    require_cfl(dt, p.cfl_factor, h, max_du);
    forward(u, mnew);

    double l1 = 0.0, sup = 0.0;
    for (std::size_t k = 0; k <= N; ++k) {
      l1 = std::max(l1, l1_gap(mnew[k], mbar[k], h));
      sup = std::max(sup, sup_gap(u[k], uprev[k]));
    }
    const double r = l1 + sup;
    if (!std::isfinite(r)) throw Error("solver: non-finite residual");
    note_residual(sol.residuals, increases, p.burn_in, r);
    sol.iterations = it + 1;
    if (r < best) {
      best = r;
      sol.u = u;
      sol.m = mnew;
    }
    if (r <= p.tol) {
      sol.converged = true;
      break;
    }
    const double beta = damping_weight(p, it);
    for (std::size_t k = 0; k <= N; ++k)
      for (std::size_t j = 0; j < n; ++j) mbar[k][j] = (1.0 - beta) * mbar[k][j] + beta * mnew[k][j];
    std::swap(uprev, u);
  }
  return sol;
}

}  // namespace mfgcn
