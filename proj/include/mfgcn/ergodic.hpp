#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfgcn/discounted.hpp"
#include "mfgcn/mfg_core.hpp"

namespace mfgcn {

/// Shared numerical setup for the long-time experiments.
struct ErgodicParams {
  double epoch_len = 4.0 / 3.0;  // jumps every epoch_len when sigma > 0
  double dt = 1e-2;
  std::vector<double> horizons;  // increasing T ladder
  std::vector<double> deltas;    // discount grid, any order
  SolveParams solve;
  double stationarity_tol = 1e-3;
  DiscountCaps caps;  // used by the discounted estimator; tail is forced to self_consistent
};

/// Tree for horizon T with jumps every epoch_len after `phase` time units of
/// the current epoch have already elapsed.
NoiseTree horizon_tree(double sigma, double horizon, const ErgodicParams& p, double phase = 0.0);

struct StationaryEstimate {
  std::vector<DensityField> mu_bar;  // one per node of the midpoint depth
  std::vector<ValueField> v_bar;     // forward slopes D+u at the midpoint
  std::vector<double> weights;       // node probabilities
  double t_mid = 0.0;                // midpoint time of the accepted run
  double horizon = 0.0;              // accepted T
  int step = 0;                      // global midpoint step
  int window = 0;                    // steps in the averaging window starting at `step`
  double anchor_gap = 0.0;           // E[d1] between the two anchors at the midpoint
  double ladder_gap = 0.0;           // d1 between expected midpoint laws of consecutive T
  bool stabilized = false;
  bool converged = true;             // every solve met the tolerance
  std::optional<MFGTreeSolution> solution;  // run from the first anchor at the accepted T
};

/// Midpoint of the epoch containing T/2, so that every ladder entry samples
/// the same phase of the jump cycle.
int midpoint_step(const NoiseTree& tree);

StationaryEstimate estimate_stationary(const CouplingSpec& c, double sigma, const DensityField& anchor1, const DensityField& anchor2,
                                       const ErgodicParams& p);

enum class LambdaMethod { horizon_difference, discounted, stationary_formula };
std::string to_string(LambdaMethod m);

struct ErgodicEstimate {
  double lambda_hat = 0.0;
  LambdaMethod method = LambdaMethod::horizon_difference;
  double residual = 0.0;            // change between the last two estimates
  std::vector<double> ladder;       // T (or delta) per estimate
  std::vector<double> estimates;    // lambda per ladder entry
  double window = 0.0;              // time window behind the final estimate
  bool converged = true;
};

ErgodicEstimate estimate_lambda(const CouplingSpec& c, double sigma, LambdaMethod method, const DensityField& m0, const ErgodicParams& p);

/// lambda from a solved stationary window: average over the window of
/// E[h sum (f(m_k) - H(D u_{k+1}))].
double stationary_formula(const CouplingSpec& c, const StationaryEstimate& st);

/// Phase that makes a horizon-T tree end exactly on a jump time, i.e. jumps
/// sit at multiples of epoch_len counted back from the terminal time.
double terminal_phase(double sigma, double horizon, const ErgodicParams& p);

/// U(-T, ., m): time-0 value of the horizon-T problem started from m. Jump
/// times are anchored at the terminal time, so U(-T - h) and U(-T) share them.
ValueField evaluate_master(const CouplingSpec& c, double sigma, double horizon, const DensityField& m, const ErgodicParams& p,
                           bool* converged = nullptr);

struct CorrectorEstimate {
  ValueField chi;               // normalized corrector at the largest T
  std::vector<double> gaps;     // sup gap between consecutive ladder entries
  double c_hat = 0.0;           // U(-T, x_ref, m_ref) - lambda T at the largest T
  bool stabilized = false;
  bool converged = true;
};

struct Normalization {
  int x_ref = 0;
  std::optional<DensityField> m_ref;  // uniform when empty
};

/// chi(x, m) ~ U(-T, x, m) - U(-T, x_ref, m_ref) along the ladder.
CorrectorEstimate estimate_corrector(const CouplingSpec& c, double sigma, const DensityField& m, double lambda_hat,
                                     const Normalization& norm, const ErgodicParams& p);

struct CorollaryReport {
  std::vector<double> t_grid;
  std::vector<double> horizons;
  std::vector<std::vector<double>> gaps;  // gaps[i][q]: horizon i, time t_grid[q]
  double t_ref = 0.0;
  bool converged = true;
};

/// Compares u^T_t - lambda (T - t) with U(-T_ref, ., mbar_t) - lambda T_ref,
/// where mbar follows the horizon-T_ref equilibrium from m0, restarted from
/// the current state every refresh_steps steps. Times must lie in the first
/// epoch, where the tree has a single node.
CorollaryReport corollary_probe(const CouplingSpec& c, double sigma, const DensityField& m0, const std::vector<double>& t_grid,
                                double lambda_hat, double t_ref, const ErgodicParams& p, int refresh_steps = 5);

}  // namespace mfgcn
