#include "mfgcn/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace mfgcn {

namespace {

class LinearSweeper {
 public:
  LinearSweeper(const MFGTreeSolution& base, const CouplingSpec& c, double delta, bool parallel)
      : b_(base), c_(c), delta_(delta), parallel_(parallel), diff_(base.grid(), base.dt()), n_(static_cast<std::size_t>(base.grid().n())) {}

  double jump(int child) const { return (child % 2 == 1) ? b_.tree.step() : -b_.tree.step(); }

  void backward(const TreeField<MeasureTag>& rho, TreeField<ValueTag>& z) const {
    const NoiseTree& tree = b_.tree;
    const double h = b_.grid().h(), dt = b_.dt();
    for (int depth = tree.epochs(); depth >= 0; --depth) {
      const int first = NoiseTree::node_id(depth, 0);
      const int count = 1 << depth;
#pragma omp parallel for schedule(static) if (parallel_ && count > 1)
      for (int i = 0; i < count; ++i) {
        const int id = first + i;
        std::vector<double> src(n_), dh(n_), a(n_), bm(n_);
        auto out = z.last(id);
        if (depth == tree.epochs()) {
          if (b_.terminal.use_coupling)
            c_.kernel_into(Which::g, rho.last(id), out);
          else
            std::fill(out.begin(), out.end(), 0.0);
        } else {
          translate_samples(z.slice(NoiseTree::child_plus(id), 0), h, -jump(NoiseTree::child_plus(id)), a);
          translate_samples(z.slice(NoiseTree::child_minus(id), 0), h, -jump(NoiseTree::child_minus(id)), bm);
          for (std::size_t j = 0; j < n_; ++j) out[j] = 0.5 * (a[j] + bm[j]);
        }
        for (int k = z.slices(id) - 2; k >= 0; --k) {
          auto zn = z.slice(id, k + 1);
          auto zk = z.slice(id, k);
          c_.kernel_into(Which::f, rho.slice(id, k), src);
          hamiltonian_derivative(b_.u.slice(id, k + 1), zn, h, dh);
          for (std::size_t j = 0; j < n_; ++j) zk[j] = zn[j] + dt * (src[j] - dh[j] - delta_ * zn[j]);
          diff_.solve_in_place(zk);
        }
      }
    }
  }

  void forward(const TreeField<ValueTag>& z, std::span<const double> rho0, TreeField<MeasureTag>& rho) const {
    const NoiseTree& tree = b_.tree;
    const double h = b_.grid().h(), dt = b_.dt();
    for (int depth = 0; depth <= tree.epochs(); ++depth) {
      const int first = NoiseTree::node_id(depth, 0);
      const int count = 1 << depth;
#pragma omp parallel for schedule(static) if (parallel_ && count > 1)
      for (int i = 0; i < count; ++i) {
        const int id = first + i;
        std::vector<double> pr(n_), pm(n_), t1(n_), t2(n_);
        if (depth == 0)
          std::copy(rho0.begin(), rho0.end(), rho.slice(id, 0).begin());
        else
          translate_samples(rho.last(NoiseTree::parent(id)), h, jump(id), rho.slice(id, 0));
        for (int k = 0; k + 1 < rho.slices(id); ++k) {
          auto un = b_.u.slice(id, k + 1);
          auto rk = rho.slice(id, k);
          auto mk = b_.m.slice(id, k);
          std::copy(rk.begin(), rk.end(), pr.begin());
          std::copy(mk.begin(), mk.end(), pm.begin());
          diff_.solve_in_place(pr);
          diff_.solve_in_place(pm);
          adjoint_drift(pr, un, h, t1);
          adjoint_drift_derivative(pm, un, z.slice(id, k + 1), h, t2);
          auto out = rho.slice(id, k + 1);
          for (std::size_t j = 0; j < n_; ++j) out[j] = pr[j] - dt * (t1[j] + t2[j]);
        }
      }
    }
  }

 private:
  const MFGTreeSolution& b_;
  const CouplingSpec& c_;
  double delta_;
  bool parallel_;
  DiffusionSolver diff_;
  std::size_t n_;
};

}  // namespace

LinearizedSolution solve_linearized(const MFGTreeSolution& base, const CouplingSpec& c, const SignedMeasure& rho0, double delta,
                                    const SolveParams& p) {
  const Grid grid = base.grid();
  if (!(c.grid() == grid) || !(rho0.grid() == grid)) throw GridMismatch();
  if (std::abs(integral(rho0)) > 1e-8) throw Error("linearized: rho0 must be centered");
  if (!(p.tol > 0.0) || p.max_iters < 1) throw Error("linearized: invalid solver parameters");
  if (delta < 0.0) throw Error("linearized: negative discount");
  const NoiseTree& tree = base.tree;
  const double h = grid.h();
  LinearSweeper sw(base, c, delta, p.parallel);

  LinearizedSolution sol{base, TreeField<ValueTag>(tree, grid), TreeField<MeasureTag>(tree, grid), {}, 0, false};
  TreeField<MeasureTag> rbar(tree, grid), rnew(tree, grid);
  TreeField<ValueTag> z(tree, grid), zprev(tree, grid);
  sw.forward(zprev, rho0.values(), rbar);

  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < p.max_iters; ++it) {
    sw.backward(rbar, z);
    sw.forward(z, rho0.values(), rnew);
    double l1 = 0.0, sup = 0.0;
    for (int id = 0; id < tree.node_count(); ++id) {
      for (int k = 0; k < z.slices(id); ++k) {
        auto a = rnew.slice(id, k), b = rbar.slice(id, k);
        auto za = z.slice(id, k), zb = zprev.slice(id, k);
        double s = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
          s += std::abs(a[j] - b[j]);
          sup = std::max(sup, std::abs(za[j] - zb[j]));
        }
        l1 = std::max(l1, h * s);
      }
    }
    const double r = l1 + sup;
    if (!std::isfinite(r)) throw Error("linearized: non-finite residual");
    sol.residuals.push_back(r);
    sol.iterations = it + 1;
    if (r < best) {
      best = r;
      sol.z.raw() = z.raw();
      sol.rho.raw() = rnew.raw();
    }
    if (r <= p.tol) {
      sol.converged = true;
      break;
    }
    const double beta = p.damping == Damping::fictitious_play ? 2.0 / (it + 2.0) : p.theta;
    auto& rb = rbar.raw();
    const auto& rn = rnew.raw();
    for (std::size_t q = 0; q < rb.size(); ++q) rb[q] = (1.0 - beta) * rb[q] + beta * rn[q];
    std::swap(zprev.raw(), z.raw());
  }
  return sol;
}

DerivativeReport derivative_check(const CouplingSpec& c, const NoiseTree& tree, const DensityField& m0, const SignedMeasure& rho0,
                                  const std::vector<double>& epsilons, const SolveParams& p) {
  if (epsilons.empty()) throw Error("derivative_check: no epsilons");
  const Grid g = c.grid();
  std::vector<DensityField> shifted;
  for (double eps : epsilons) {
    DensityField m = m0;
    for (int j = 0; j < g.n(); ++j) {
      m[j] += eps * rho0[j];
      if (m[j] < 0.0) throw Error("derivative_check: m0 + eps rho0 is negative at cell " + std::to_string(j));
    }
    shifted.push_back(std::move(m));
  }
  const Terminal term = Terminal::coupling();
  MFGTreeSolution base = solve_mfg_tree(c, tree, m0, term, p);
  LinearizedSolution lin = solve_linearized(base, c, rho0, p.delta, p);

  DerivativeReport rep;
  rep.epsilons = epsilons;
  rep.z0.assign(lin.z.slice(0, 0).begin(), lin.z.slice(0, 0).end());
  rep.converged = base.converged && lin.converged;
  auto u0 = base.u.slice(0, 0);
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    MFGTreeSolution s = solve_mfg_tree(c, tree, shifted[i], term, p);
    rep.converged = rep.converged && s.converged;
    auto ue = s.u.slice(0, 0);
    double e = 0.0;
    for (int j = 0; j < g.n(); ++j) e = std::max(e, std::abs((ue[j] - u0[j]) / epsilons[i] - rep.z0[static_cast<std::size_t>(j)]));
    rep.errors.push_back(e);
  }
  for (std::size_t i = 0; i + 1 < rep.errors.size(); ++i) rep.ratios.push_back(rep.errors[i] / rep.errors[i + 1]);
  if (epsilons.size() > 1) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double cnt = static_cast<double>(epsilons.size());
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      double x = std::log(epsilons[i]), y = std::log(std::max(rep.errors[i], 1e-300));
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double den = cnt * sxx - sx * sx;
    rep.slope = den > 0.0 ? (cnt * sxy - sx * sy) / den : 0.0;
  }
  return rep;
}

SignedMeasure random_direction(const Grid& g, std::uint64_t seed, int modes) {
  std::mt19937_64 rng(seed);
  // explicit conversion so the draw does not depend on the library's distributions
  auto unit = [&] { return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0; };
  SignedMeasure rho(g);
  for (int k = 1; k <= modes; ++k) {
    const double a = unit() / k, b = unit() / k;
    for (int j = 0; j < g.n(); ++j) {
      const double x = 2 * std::numbers::pi * k * g.x(j);
      rho[j] += a * std::cos(x) + b * std::sin(x);
    }
  }
  const double sup = sup_norm(rho.values());
  if (sup > 0.0)
    for (int j = 0; j < g.n(); ++j) rho[j] /= sup;
  return rho;
}

double dual_norm(const SignedMeasure& rho) {
  const int n = rho.grid().n();
  const double h = rho.grid().h();
  double acc = 0.0;
  // modes k = -n/2+1 .. n/2; conjugate pairs share a weight
  for (int k = -n / 2 + 1; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int j = 0; j < n; ++j) {
      const double ang = 2.0 * std::numbers::pi * k * j * h;
      re += h * rho[j] * std::cos(ang);
      im -= h * rho[j] * std::sin(ang);
    }
    const double w = 1.0 + 4.0 * std::numbers::pi * std::numbers::pi * k * k;
    acc += (re * re + im * im) / w;
  }
  return std::sqrt(acc);
}

}  // namespace mfgcn
