#include "mfgcn/discounted.hpp"

#include <algorithm>
#include <cmath>

namespace mfgcn {

double running_cost_sup(const CouplingSpec& c, const MFGTreeSolution& s) {
  std::vector<double> f(static_cast<std::size_t>(c.grid().n()));
  double best = 0.0;
  for (int id = 0; id < s.tree.node_count(); ++id) {
    for (int k = 0; k < s.m.slices(id); ++k) {
      c.eval_into(Which::f, s.m.slice(id, k), f);
      best = std::max(best, sup_norm(f));
    }
  }
  return best;
}

DiscountedSolution solve_discounted(const CouplingSpec& c, double sigma, double delta, const DensityField& m0, SolveParams p,
                                    const DiscountCaps& caps) {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("discounted: delta must lie in (0, 1]");
  if (!(caps.epoch_len > 0.0 && caps.dt > 0.0 && caps.max_horizon > 0.0)) throw Error("discounted: invalid caps");
  const double wanted = std::log(1.0 / p.tol) / delta;
  double t_max = std::min(caps.max_horizon, wanted);
  int epochs = 0;
  double epoch_len = t_max;
  if (sigma > 0.0) {
    epochs = std::max(1, static_cast<int>(std::lround(t_max / caps.epoch_len)));
    epochs = std::min({epochs, caps.max_epochs, kMaxEpochs});
    epoch_len = caps.epoch_len;
    t_max = epochs * epoch_len;
  }
  const int fine = std::max(1, static_cast<int>(std::lround(epoch_len / caps.dt)));
  NoiseTree tree = build_tree(sigma, t_max, epochs, fine);

  p.delta = delta;
  DiscountedSolution out{solve_mfg_tree(c, tree, m0, Terminal::fixed(ValueField(c.grid())), p), delta, t_max, 0.0, 0.0, t_max < wanted};

  const double decay = std::exp(-delta * t_max);
  // discrete counterpart of the decay factor over the whole window
  const double q = std::pow(1.0 - delta * tree.dt(), tree.total_steps());
  switch (caps.tail) {
    case TailClosure::zero:
      break;
    case TailClosure::fixed:
      out.tail_value = caps.tail_rate / delta;
      break;
    case TailClosure::self_consistent: {
      double mean0 = integral(out.base.u.slice(0, 0), c.grid().h());
      out.tail_value = mean0 / (1.0 - q);
      break;
    }
  }
  if (out.tail_value != 0.0) {
    const double dt = tree.dt();
    const int total = tree.total_steps();
    for (int id = 0; id < tree.node_count(); ++id) {
      for (int k = 0; k < out.base.u.slices(id); ++k) {
        // one backward step multiplies a constant by (1 - delta dt) before
        // the diffusion solve, which leaves constants alone
        const int remaining = total - (tree.first_step(id) + k);
        const double add = out.tail_value * std::pow(1.0 - delta * dt, remaining);
        for (double& x : out.base.u.slice(id, k)) x += add;
      }
    }
  }
  out.truncation_error_bound = running_cost_sup(c, out.base) * decay / delta;
  return out;
}

double discounted_value_sup(const DiscountedSolution& s) { return s.delta * sup_norm(s.base.u.slice(0, 0)); }

}  // namespace mfgcn
