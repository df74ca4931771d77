#pragma once

#include <cstdint>
#include <vector>

#include "mfgcn/mfg_core.hpp"

namespace mfgcn {

/// Linearization of the discrete tree MFG around a solved equilibrium.
/// z is the value perturbation, rho the (centered) density perturbation.
struct LinearizedSolution {
  MFGTreeSolution base;
  TreeField<ValueTag> z;
  TreeField<MeasureTag> rho;
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;

  ValueField z0() const { return z.field(0, 0); }
};

/// Solves the exact derivative of the discrete scheme of `base` along the
/// initial perturbation rho0. The base must be stored in the lab frame,
/// which solve_mfg_tree guarantees. Damping and tolerance come from p.
LinearizedSolution solve_linearized(const MFGTreeSolution& base, const CouplingSpec& c, const SignedMeasure& rho0, double delta,
                                    const SolveParams& p);

struct DerivativeReport {
  std::vector<double> epsilons;
  std::vector<double> errors;  // max_x |(u0(m0 + eps rho0) - u0(m0)) / eps - z0|
  std::vector<double> ratios;  // errors[i] / errors[i + 1] for consecutive epsilons
  double slope = 0.0;          // least-squares slope of log e against log eps
  std::vector<double> z0;
  bool converged = false;
};

/// Finite-difference check of the linearized value at time 0. Throws when
/// m0 + eps rho0 has a negative cell.
DerivativeReport derivative_check(const CouplingSpec& c, const NoiseTree& tree, const DensityField& m0, const SignedMeasure& rho0,
                                  const std::vector<double>& epsilons, const SolveParams& p);

/// Smooth centered direction sum_{k <= modes} (a_k cos + b_k sin)(2 pi k x) / k
/// with a_k, b_k uniform in [-1, 1], scaled to sup norm 1. The draw depends
/// only on the seed.
SignedMeasure random_direction(const Grid& g, std::uint64_t seed, int modes = 4);

/// Discrete H^-1 norm: square root of the sum over Fourier modes of |rho_k|^2 / (1 + (2 pi k)^2).
double dual_norm(const SignedMeasure& rho);

}  // namespace mfgcn
