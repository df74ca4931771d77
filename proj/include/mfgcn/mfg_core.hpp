#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mfgcn/couplings.hpp"
#include "mfgcn/noise_tree.hpp"
#include "mfgcn/torus.hpp"

namespace mfgcn {

class CflViolation : public Error {
 public:
  using Error::Error;
};

enum class Damping { fictitious_play, fixed };
// physical: fields live in the lab frame and are translated at every jump.
// shifted: fields are carried in the frame moving with the common noise and
// the coupling arguments are translated instead.
enum class Frame { physical, shifted };
enum class InitialGuess { heat_flow, uniform };

struct SolveParams {
  int max_iters = 5000;
  double tol = 1e-7;
  Damping damping = Damping::fictitious_play;
  double theta = 1.0;  // weight for Damping::fixed; 1 is plain Picard
  double cfl_factor = 0.5;
  double delta = 0.0;  // discount rate
  Frame frame = Frame::physical;
  InitialGuess init = InitialGuess::heat_flow;
  bool parallel = true;
  int burn_in = 20;
};

/// Largest admissible dt for a gradient bound: cfl * h / (max|Du| + 1).
double cfl_limit(double cfl_factor, double h, double max_du);

// ---------------------------------------------------------------------------
// Span kernels shared by every solver in the library.

double max_abs_gradient(std::span<const double> u, double h);
/// Godunov Hamiltonian 1/2 [max(D-u, 0)^2 + min(D+u, 0)^2].
void godunov_hamiltonian(std::span<const double> u, double h, std::span<double> out);
/// Adjoint of z -> a D-z + b D+z with a = max(D-u,0), b = min(D+u,0).
void adjoint_drift(std::span<const double> p, std::span<const double> u, double h, std::span<double> out);

/// Directional derivative of H_God at u along z: a D-z + b D+z.
void hamiltonian_derivative(std::span<const double> u, std::span<const double> z, double h, std::span<double> out);
/// Derivative of p -> B(p, u) in u along z, with p frozen. The kinks of the
/// upwind split are resolved one-sidedly: slopes exactly at zero count as inactive.
void adjoint_drift_derivative(std::span<const double> p, std::span<const double> u, std::span<const double> z, double h,
                              std::span<double> out);

/// out = S (u_next + dt (f_now - H(D u_next) - delta u_next)), S = (I - dt Lap)^-1.
void hj_step_into(const DiffusionSolver& s, std::span<const double> u_next, std::span<const double> f_now, double dt, double delta,
                  std::span<double> out);
/// out = P - dt B(P, u_next), P = S m_now.
void fp_step_into(const DiffusionSolver& s, std::span<const double> m_now, std::span<const double> u_next, double dt, std::span<double> out,
                  std::span<double> scratch);

// ---------------------------------------------------------------------------
// Field-level steps.

ValueField hj_backward_step(const ValueField& u_next, const ValueField& f_now, double dt, double delta, double cfl_factor = 0.5);
DensityField fp_forward_step(const DensityField& m_now, const UpwindGradient& drift, double dt, double cfl_factor = 0.5);
ValueField branch_average_backward(const ValueField& u_plus, const ValueField& u_minus, double s);
DensityField branch_push_forward(const DensityField& m, double s_signed);

// ---------------------------------------------------------------------------
// Tree solver.

/// Terminal data: either u_T = g(m_T) or a fixed field per leaf.
struct Terminal {
  bool use_coupling = true;
  std::vector<ValueField> leaf_fields;  // one per leaf, or one shared by all

  static Terminal coupling() { return {}; }
  static Terminal fixed(std::vector<ValueField> fields) { return {false, std::move(fields)}; }
  static Terminal fixed(const ValueField& field) { return {false, {field}}; }
};

struct MFGTreeSolution {
  NoiseTree tree;
  TreeField<ValueTag> u;
  TreeField<DensityTag> m;
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;
  int residual_increases = 0;  // jumps above 1.05x the previous residual after burn-in
  double max_gradient = 0.0;
  SolveParams params;
  Terminal terminal;

  const Grid& grid() const { return u.grid(); }
  double dt() const { return tree.dt(); }
  /// Exact expectation over the nodes owning global step k of a per-slice functional.
  double expect_at_step(int k, const std::function<double(int node, std::span<const double> u, std::span<const double> m)>& fn) const;
  /// Root value u at time 0.
  ValueField u0() const { return u.field(0, 0); }
};

MFGTreeSolution solve_mfg_tree(const CouplingSpec& c, const NoiseTree& tree, const DensityField& m0, const Terminal& terminal,
                               const SolveParams& p);

/// Serial single-branch reference: no tree, no translation, same kernels.
struct DeterministicSolution {
  std::vector<std::vector<double>> u, m;  // steps 0..N
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;
};

DeterministicSolution solve_mfg_deterministic(const CouplingSpec& c, double horizon, int steps, const DensityField& m0,
                                              const Terminal& terminal, const SolveParams& p);

}  // namespace mfgcn
