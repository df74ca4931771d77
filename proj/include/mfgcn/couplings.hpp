#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfgcn/torus.hpp"

namespace mfgcn {

enum class Which { f, g };

/// Monotone coupling pair realized as potential plus a positive
/// semidefinite convolution kernel:
///   f(x, m) = a(x) + lam_0 <m,1> + sum_k lam_k [c_k(m) cos(2 pi k x) + s_k(m) sin(2 pi k x)]
/// and likewise g with (b, mu). f is affine in m.
class CouplingSpec {
 public:
  static CouplingSpec make(ValueField a, std::vector<double> lam, ValueField b, std::vector<double> mu);
  /// Skips the sign check on the eigenvalues. Only for tests and for the
  /// certificate's negative controls.
  static CouplingSpec make_unchecked(ValueField a, std::vector<double> lam, ValueField b, std::vector<double> mu);
  /// Zero potentials and no interaction.
  static CouplingSpec zero(const Grid& grid);

  const Grid& grid() const { return a_.grid(); }
  const ValueField& potential(Which w) const { return w == Which::f ? a_ : b_; }
  const std::vector<double>& eigs(Which w) const { return w == Which::f ? lam_ : mu_; }
  int modes() const { return modes_; }
  /// True when f does not depend on m except through its mass.
  bool decoupled(Which w) const;

  /// out = potential + kernel * m for raw samples (no allocation).
  void eval_into(Which w, std::span<const double> m, std::span<double> out) const;
  /// out = kernel * rho without the potential and without the k = 0 term
  /// (rho is centered).
  void kernel_into(Which w, std::span<const double> rho, std::span<double> out) const;

  double cos_table(int k, int j) const { return cos_[static_cast<std::size_t>(k) * n_ + static_cast<std::size_t>(j)]; }
  double sin_table(int k, int j) const { return sin_[static_cast<std::size_t>(k) * n_ + static_cast<std::size_t>(j)]; }

 private:
  CouplingSpec(ValueField a, std::vector<double> lam, ValueField b, std::vector<double> mu);
  void apply(const std::vector<double>& eig, std::span<const double> m, std::span<double> out, bool with_mean) const;

  ValueField a_, b_;
  std::vector<double> lam_, mu_;
  int modes_;
  std::size_t n_;
  std::vector<double> cos_, sin_;  // row k holds cos(2 pi k x_j), k = 0..modes
};

ValueField eval_f(const CouplingSpec& c, const DensityField& m);
ValueField eval_g(const CouplingSpec& c, const DensityField& m);
/// Flat derivative applied to a centered measure. Throws if h*sum(rho) is
/// not within 1e-8 of zero.
ValueField apply_flat_derivative(const CouplingSpec& c, const SignedMeasure& rho, Which which);

struct MonotonicityReport {
  double min_quadratic_form;
  SignedMeasure witness;
  Which kernel;
};

/// Minimum of h^2 sum_ij K(x_i, x_j) mu_i mu_j over centered mu with
/// h sum mu^2 = 1: each Fourier mode is tried, then `trials` random draws.
MonotonicityReport monotonicity_certificate(const CouplingSpec& c, int trials, std::uint64_t seed);

/// Lipschitz constant of m -> f(., m) from d1 to the sup norm.
double lipschitz_constant(const CouplingSpec& c, Which which = Which::f);

}  // namespace mfgcn
