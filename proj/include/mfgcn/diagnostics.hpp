#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfgcn/mfg_core.hpp"

namespace mfgcn {

inline constexpr double kSeriesFloor = 1e-14;

struct Series {
  std::vector<double> t, value;
  void push(double ti, double v) {
    t.push_back(ti);
    value.push_back(v);
  }
  std::size_t size() const { return t.size(); }
};

struct DecayFit {
  double rate = 0.0;       // >= 0
  double amplitude = 0.0;
  double r2 = 0.0;
  double t1 = 0.0, t2 = 0.0;
  int points = 0;
};

/// Least squares on log(max(value, floor)) over samples with t in [t1, t2].
/// A negative slope is reported as rate 0.
DecayFit fit_exponential_decay(const Series& s, double t1, double t2);
DecayFit fit_exponential_decay(const Series& s);

/// Fit of log value ~ log A + log(e^{-w t} + e^{-w (T - t)}) over samples
/// strictly above `floor`. The rate is found by a bracketing search.
DecayFit fit_two_sided_decay(const Series& s, double horizon, double floor);

/// Linear interpolation of a series at time t (clamped to its support).
double series_at(const Series& s, double t);

// ---------------------------------------------------------------------------
// Turnpike.

struct TurnpikeReport {
  Series density_gap;   // E[d1(m_t, proxy m_t)]
  Series gradient_gap;  // E[|| D+u_t - D+proxy u_t ||_L2]
  DecayFit density_fit, gradient_fit;
  double noise_floor = 0.0;
  /// min(gap(0), gap(T)) / gap(T/2) for the density series.
  double contrast = 0.0;
};

/// Stationary-regime proxy for `sol`: the same problem started from another
/// initial law on a tree extended by `pad` epochs, so that both trees agree
/// on every node up to the horizon of `sol`. With pad = 0 the proxy shares
/// the terminal condition as well.
MFGTreeSolution solve_turnpike_proxy(const CouplingSpec& c, const MFGTreeSolution& sol, const DensityField& m0_other, int pad,
                                     const SolveParams& p);

/// Distances between `sol` and `proxy` node by node and step by step.
/// Samples at or below noise_floor are left out of the fits.
TurnpikeReport turnpike_report(const MFGTreeSolution& sol, const MFGTreeSolution& proxy, double noise_floor);

// ---------------------------------------------------------------------------
// Duality.

struct LasryLionsReport {
  Series bracket;      // E[<u1 - u2, m1 - m2>] per step
  Series dissipation;  // cumulative Hamiltonian dissipation from t = 0
  Series quadratic;    // cumulative 1/2 E[<|D u1 - D u2|^2, m1 + m2>] (one-sided slopes)
  /// max over steps of [bracket_{k+1} - bracket_k + dissipation_k]^+.
  double max_violation = 0.0;
  double magnitude = 0.0;  // largest |bracket| or total dissipation seen
  bool holds(double slack) const { return max_violation <= slack * (1.0 + magnitude); }
};

/// Requires two solutions on the same tree and coupling, differing in m0.
LasryLionsReport lasry_lions_functional(const MFGTreeSolution& s1, const MFGTreeSolution& s2);

// ---------------------------------------------------------------------------
// Linear decay probes.

/// V(t, x); presets stay within |V| <= 2.
using Drift = std::function<double(double t, double x)>;

struct NamedDrift {
  std::string name;
  Drift v;
};
std::vector<NamedDrift> drift_presets();

struct ForwardProbe {
  Series norm;  // ||mu_t||_L2
  DecayFit fit;
  double max_mass = 0.0;  // max_t |h sum mu_t|
};

/// Evolves d/dt mu = Lap mu + div(mu V) with implicit diffusion and an
/// upwind flux, and fits the decay of ||mu_t|| over [fit_from * T, T].
ForwardProbe fp_decay_probe(const Drift& v, const SignedMeasure& mu0, double horizon, double dt, double fit_from = 0.0);

struct BackwardProbe {
  Series norm;    // || v_t - mean v_t ||_L2
  Series source;  // || A(t) ||_L2
  DecayFit fit;   // decay of norm backward from the horizon
  /// Smallest C with ||v(t0)|| <= C [e^{-lam (T - t0)} ||v(T)|| + int_{t0}^T e^{-lam (s - t0)} ||A(s)|| ds]
  /// over the sampled t0.
  double constant_for(double lam) const;
};

/// Solves dv = (-Lap v + V.Dv + A) dt backward from v(T) = terminal.
BackwardProbe backward_decay_probe(const Drift& v, const Drift& source, const ValueField& terminal, double horizon, double dt);

// ---------------------------------------------------------------------------
// Decay certificate.

enum class CertificateMode { finite, discounted };

struct CertificateOptions {
  CertificateMode mode = CertificateMode::finite;
  double delta = 0.0;           // discounted mode only
  double c0_cap = 50.0;         // largest C0 accepted as "finite"
  double lam_min = 0.05, lam_max = 2.0, lam_step = 0.05;
  double floor = kSeriesFloor;  // samples of alpha + gamma below this are left out of the conclusion fit
};

struct CertificateReport {
  double c0 = 0.0;       // smallest C0 making every hypothesis hold at lambda
  double lambda = 0.0;   // largest grid lambda whose C0 stays within the cap
  // required C0 per hypothesis at lambda, slots 0-3 for hypotheses 1-4. The
  // discounted mode puts its discounted forms of hypotheses 1 and 3 in slots 0
  // and 2; slots 1 and 3 are unchanged.
  std::vector<double> required;
  std::vector<double> margins;  // 1 - required / cap, clipped to [-1, 1]
  std::vector<bool> holds;
  double conclusion_rate = 0.0;  // fitted lambda'
  double conclusion_c = 0.0;     // smallest C for the fitted lambda'
  /// min(log(rate / lam_min), log(cap / C)): nonnegative when the sum decays
  /// at least at the slowest grid rate with an admissible constant.
  double conclusion_margin = 0.0;
  bool hypotheses_hold() const;
};

CertificateReport certificate_check(const Series& alpha, const Series& beta, const Series& gamma, const CertificateOptions& opt);

/// alpha = E||u1 - u2 - mean||^2, beta = E||D+u1 - D+u2||^2, gamma = E||m1 - m2||^2.
void certificate_series(const MFGTreeSolution& s1, const MFGTreeSolution& s2, Series& alpha, Series& beta, Series& gamma);

}  // namespace mfgcn
