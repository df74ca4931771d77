#include "mfgcn/couplings.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace mfgcn {

namespace {

int check_shapes(const ValueField& a, const std::vector<double>& lam, const ValueField& b, const std::vector<double>& mu) {
  if (!(a.grid() == b.grid())) throw GridMismatch();
  int modes = static_cast<int>(std::max(lam.size(), mu.size())) - 1;
  if (modes < 0) modes = 0;
  if (modes > a.grid().n() / 4) throw Error("coupling: kernel has more than n/4 modes");
  for (double x : lam)
    if (!std::isfinite(x)) throw Error("coupling: non-finite eigenvalue");
  for (double x : mu)
    if (!std::isfinite(x)) throw Error("coupling: non-finite eigenvalue");
  return modes;
}

}  // namespace

CouplingSpec::CouplingSpec(ValueField a, std::vector<double> lam, ValueField b, std::vector<double> mu)
    : a_(std::move(a)), b_(std::move(b)), lam_(std::move(lam)), mu_(std::move(mu)), modes_(check_shapes(a_, lam_, b_, mu_)),
      n_(static_cast<std::size_t>(a_.grid().n())) {
  cos_.resize(static_cast<std::size_t>(modes_ + 1) * n_);
  sin_.resize(cos_.size());
  for (int k = 0; k <= modes_; ++k) {
    for (std::size_t j = 0; j < n_; ++j) {
      double arg = 2.0 * std::numbers::pi * k * a_.grid().x(static_cast<int>(j));
      cos_[static_cast<std::size_t>(k) * n_ + j] = std::cos(arg);
      sin_[static_cast<std::size_t>(k) * n_ + j] = std::sin(arg);
    }
  }
}

CouplingSpec CouplingSpec::make(ValueField a, std::vector<double> lam, ValueField b, std::vector<double> mu) {
  for (double x : lam)
    if (x < 0.0) throw Error("coupling: negative kernel eigenvalue breaks monotonicity");
  for (double x : mu)
    if (x < 0.0) throw Error("coupling: negative kernel eigenvalue breaks monotonicity");
  return CouplingSpec(std::move(a), std::move(lam), std::move(b), std::move(mu));
}

CouplingSpec CouplingSpec::make_unchecked(ValueField a, std::vector<double> lam, ValueField b, std::vector<double> mu) {
  return CouplingSpec(std::move(a), std::move(lam), std::move(b), std::move(mu));
}

CouplingSpec CouplingSpec::zero(const Grid& grid) { return make(ValueField(grid), {}, ValueField(grid), {}); }

bool CouplingSpec::decoupled(Which w) const {
  const auto& e = eigs(w);
  for (std::size_t k = 1; k < e.size(); ++k)
    if (e[k] != 0.0) return false;
  return true;
}

void CouplingSpec::apply(const std::vector<double>& eig, std::span<const double> m, std::span<double> out, bool with_mean) const {
  const double h = a_.grid().h();
  for (std::size_t k = 0; k < eig.size(); ++k) {
    if (eig[k] == 0.0 || (k == 0 && !with_mean)) continue;
    const double* ct = &cos_[k * n_];
    const double* st = &sin_[k * n_];
    double ck = 0.0, sk = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      ck += ct[j] * m[j];
      sk += st[j] * m[j];
    }
    ck *= h * eig[k];
    sk *= h * eig[k];
    for (std::size_t j = 0; j < n_; ++j) out[j] += ck * ct[j] + sk * st[j];
  }
}

void CouplingSpec::eval_into(Which w, std::span<const double> m, std::span<double> out) const {
  if (m.size() != n_ || out.size() != n_) throw GridMismatch();
  const ValueField& p = potential(w);
  for (std::size_t j = 0; j < n_; ++j) out[j] = p[static_cast<int>(j)];
  apply(eigs(w), m, out, true);
}

void CouplingSpec::kernel_into(Which w, std::span<const double> rho, std::span<double> out) const {
  if (rho.size() != n_ || out.size() != n_) throw GridMismatch();
  for (std::size_t j = 0; j < n_; ++j) out[j] = 0.0;
  apply(eigs(w), rho, out, false);
}

ValueField eval_f(const CouplingSpec& c, const DensityField& m) {
  if (!(c.grid() == m.grid())) throw GridMismatch();
  ValueField out(m.grid());
  c.eval_into(Which::f, m.values(), out.values());
  return out;
}

ValueField eval_g(const CouplingSpec& c, const DensityField& m) {
  if (!(c.grid() == m.grid())) throw GridMismatch();
  ValueField out(m.grid());
  c.eval_into(Which::g, m.values(), out.values());
  return out;
}

ValueField apply_flat_derivative(const CouplingSpec& c, const SignedMeasure& rho, Which which) {
  if (!(c.grid() == rho.grid())) throw GridMismatch();
  if (std::abs(integral(rho)) > 1e-8) throw Error("flat derivative: measure is not centered");
  ValueField out(rho.grid());
  c.kernel_into(which, rho.values(), out.values());
  return out;
}

namespace {

double quadratic_form(const CouplingSpec& c, Which w, std::span<const double> mu) {
  const auto& e = c.eigs(w);
  const double h = c.grid().h();
  const int n = c.grid().n();
  double q = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    double ck = 0.0, sk = 0.0;
    for (int j = 0; j < n; ++j) {
      ck += c.cos_table(static_cast<int>(k), j) * mu[static_cast<std::size_t>(j)];
      sk += c.sin_table(static_cast<int>(k), j) * mu[static_cast<std::size_t>(j)];
    }
    q += e[k] * h * h * (ck * ck + sk * sk);
  }
  return q;
}

void normalize_centered(std::vector<double>& mu, double h) {
  double mean = 0.0;
  for (double x : mu) mean += x;
  mean /= static_cast<double>(mu.size());
  double ss = 0.0;
  for (double& x : mu) {
    x -= mean;
    ss += x * x;
  }
  double norm = std::sqrt(h * ss);
  if (norm > 0.0)
    for (double& x : mu) x /= norm;
}

}  // namespace

MonotonicityReport monotonicity_certificate(const CouplingSpec& c, int trials, std::uint64_t seed) {
  if (trials < 1) throw Error("monotonicity certificate: need at least one trial");
  const Grid& grid = c.grid();
  const int n = grid.n();
  MonotonicityReport best{std::numeric_limits<double>::infinity(), SignedMeasure(grid), Which::f};
  auto consider = [&](std::vector<double>& mu) {
    normalize_centered(mu, grid.h());
    for (Which w : {Which::f, Which::g}) {
      double q = quadratic_form(c, w, mu);
      if (q < best.min_quadratic_form) best = {q, SignedMeasure(grid, mu), w};
    }
  };
  std::vector<double> mu(static_cast<std::size_t>(n));
  for (int k = 1; k <= c.modes(); ++k) {
    for (int j = 0; j < n; ++j) mu[static_cast<std::size_t>(j)] = c.cos_table(k, j);
    consider(mu);
    for (int j = 0; j < n; ++j) mu[static_cast<std::size_t>(j)] = c.sin_table(k, j);
    consider(mu);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    for (double& x : mu) x = normal(rng);
    consider(mu);
  }
  return best;
}

double lipschitz_constant(const CouplingSpec& c, Which which) {
  double l = 0.0;
  const auto& e = c.eigs(which);
  for (std::size_t k = 1; k < e.size(); ++k) l += 2.0 * std::numbers::pi * static_cast<double>(k) * std::abs(e[k]);
  return l;
}

}  // namespace mfgcn
