#pragma once

#include "mfgcn/mfg_core.hpp"

namespace mfgcn {

// How the value beyond the truncation horizon is closed.
//   zero: u(t_max) = 0.
//   fixed: u(t_max) = tail_rate / delta.
//   self_consistent: u(t_max) = c / delta with c = delta * mean_x u(0),
//     i.e. the tail earns the same average rate as the solved window.
// A constant terminal value does not change the equilibrium flow, it only
// adds C e^{-delta (t_max - t)} to u, so all three come from one solve.
enum class TailClosure { zero, fixed, self_consistent };

struct DiscountCaps {
  double max_horizon = 12.0;
  double epoch_len = 4.0 / 3.0;
  double dt = 1e-2;
  int max_epochs = 10;
  TailClosure tail = TailClosure::zero;
  double tail_rate = 0.0;
};

struct DiscountedSolution {
  MFGTreeSolution base;
  double delta = 0.0;
  double t_max = 0.0;
  double truncation_error_bound = 0.0;
  double tail_value = 0.0;    // constant terminal value actually used
  bool capped = false;        // t_max was limited by the caps, not by tol
};

DiscountedSolution solve_discounted(const CouplingSpec& c, double sigma, double delta, const DensityField& m0, SolveParams p,
                                    const DiscountCaps& caps);

/// sup_x |delta u(0, x)|, the quantity bounded by max |f|.
double discounted_value_sup(const DiscountedSolution& s);
/// Largest |f(x, m_t)| seen along the solved flow.
double running_cost_sup(const CouplingSpec& c, const MFGTreeSolution& s);

}  // namespace mfgcn
