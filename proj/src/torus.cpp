#include "mfgcn/torus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace mfgcn {

Grid::Grid(int n) : n_(n), h_(1.0 / n) {
  if (n < 8) throw Error("grid: n must be at least 8, got " + std::to_string(n));
}

template <class Tag>
GridFunction<Tag>::GridFunction(const Grid& grid, std::vector<double> values) : grid_(grid), v_(std::move(values)) {
  if (static_cast<int>(v_.size()) != grid.n()) throw GridMismatch();
}

template <class Tag>
GridFunction<Tag>& GridFunction<Tag>::operator+=(const GridFunction& o) {
  if (!(grid_ == o.grid_)) throw GridMismatch();
  for (std::size_t j = 0; j < v_.size(); ++j) v_[j] += o.v_[j];
  return *this;
}

template <class Tag>
GridFunction<Tag>& GridFunction<Tag>::operator-=(const GridFunction& o) {
  if (!(grid_ == o.grid_)) throw GridMismatch();
  for (std::size_t j = 0; j < v_.size(); ++j) v_[j] -= o.v_[j];
  return *this;
}

template <class Tag>
GridFunction<Tag>& GridFunction<Tag>::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

template class GridFunction<ValueTag>;
template class GridFunction<DensityTag>;
template class GridFunction<MeasureTag>;

double integral(std::span<const double> v, double h) {
  double s = 0.0;
  for (double x : v) s += x;
  return h * s;
}

double sup_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

double l2_norm(std::span<const double> v, double h) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(h * s);
}

void validate_density(const DensityField& m, double tol) {
  for (int j = 0; j < m.size(); ++j) {
    if (!std::isfinite(m[j])) throw Error("density: non-finite value at cell " + std::to_string(j));
    if (m[j] < -1e-14) throw Error("density: negative value at cell " + std::to_string(j));
  }
  double mass = integral(m);
  if (std::abs(mass - 1.0) > tol) throw Error("density: mass " + std::to_string(mass) + " differs from 1");
}

DensityField uniform_density(const Grid& grid) {
  return DensityField(grid, std::vector<double>(static_cast<std::size_t>(grid.n()), 1.0));
}

DensityField point_mass(const Grid& grid, int cell) {
  DensityField m(grid);
  int n = grid.n();
  m[((cell % n) + n) % n] = 1.0 / grid.h();
  return m;
}

DensityField bump_density(const Grid& grid, double center, double width) {
  DensityField m(grid);
  for (int j = 0; j < grid.n(); ++j) {
    double acc = 0.0;
    for (int w = -3; w <= 3; ++w) {
      double d = grid.x(j) - center + w;
      acc += std::exp(-0.5 * d * d / (width * width));
    }
    m[j] = acc;
  }
  m *= 1.0 / integral(m);
  return m;
}

SignedMeasure centered_dirac(const Grid& grid, int cell) {
  SignedMeasure rho(grid);
  int n = grid.n();
  for (int j = 0; j < n; ++j) rho[j] = -1.0;
  rho[((cell % n) + n) % n] += 1.0 / grid.h();
  return rho;
}

ValueField laplacian(const ValueField& u) {
  const int n = u.size();
  const double ih2 = 1.0 / (u.grid().h() * u.grid().h());
  ValueField out(u.grid());
  for (int j = 0; j < n; ++j) {
    int jp = j + 1 == n ? 0 : j + 1;
    int jm = j == 0 ? n - 1 : j - 1;
    out[j] = (u[jp] - 2.0 * u[j] + u[jm]) * ih2;
  }
  return out;
}

UpwindGradient gradient_upwind(const ValueField& u) {
  const int n = u.size();
  const double ih = 1.0 / u.grid().h();
  UpwindGradient g{ValueField(u.grid()), ValueField(u.grid())};
  for (int j = 0; j < n; ++j) {
    int jp = j + 1 == n ? 0 : j + 1;
    int jm = j == 0 ? n - 1 : j - 1;
    g.plus[j] = (u[jp] - u[j]) * ih;
    g.minus[j] = (u[j] - u[jm]) * ih;
  }
  return g;
}

// Cyclic tridiagonal system with diagonal 1+2r and off-diagonals -r, solved
// by Thomas elimination plus a Sherman-Morrison correction for the corners.
DiffusionSolver::DiffusionSolver(const Grid& grid, double nu_dt) : grid_(grid), nu_dt_(nu_dt), corr_(0.0) {
  if (nu_dt < 0.0) throw Error("diffusion: negative nu*dt");
  const int n = grid.n();
  r_ = nu_dt / (grid.h() * grid.h());
  if (r_ == 0.0) return;
  const double a = -r_, b = 1.0 + 2.0 * r_;
  const double gamma = -b;
  cprime_.assign(static_cast<std::size_t>(n), 0.0);
  denom_.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> diag(static_cast<std::size_t>(n), b);
  diag[0] = b - gamma;
  diag[static_cast<std::size_t>(n - 1)] = b - a * a / gamma;
  denom_[0] = diag[0];
  cprime_[0] = a / denom_[0];
  for (std::size_t i = 1; i < diag.size(); ++i) {
    denom_[i] = diag[i] - a * cprime_[i - 1];
    cprime_[i] = a / denom_[i];
  }
  z_.assign(static_cast<std::size_t>(n), 0.0);
  z_[0] = gamma;
  z_[static_cast<std::size_t>(n - 1)] = a;
  std::vector<double>& x = z_;
  x[0] /= denom_[0];
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = (x[i] - a * x[i - 1]) / denom_[i];
  for (std::size_t i = x.size() - 1; i-- > 0;) x[i] -= cprime_[i] * x[i + 1];
  corr_ = 1.0 + z_[0] + (a / gamma) * z_.back();
}

void DiffusionSolver::solve_in_place(std::span<double> x) const {
  const int n = grid_.n();
  if (static_cast<int>(x.size()) != n) throw GridMismatch();
  if (r_ == 0.0) return;
  const double a = -r_;
  const double gamma = -(1.0 + 2.0 * r_);
  x[0] /= denom_[0];
  for (int i = 1; i < n; ++i) x[i] = (x[i] - a * x[i - 1]) / denom_[static_cast<std::size_t>(i)];
  for (int i = n - 2; i >= 0; --i) x[i] -= cprime_[static_cast<std::size_t>(i)] * x[i + 1];
  const double fac = (x[0] + (a / gamma) * x[n - 1]) / corr_;
  for (int i = 0; i < n; ++i) x[i] -= fac * z_[static_cast<std::size_t>(i)];
}

namespace {

// Stencil nodes -kLo..kLo+1 around the base cell; symmetric under
// (t, o) -> (1 - t, 1 - o), which makes shifts by s and -s adjoint.
constexpr int kLo = 3;
constexpr int kWidth = 2 * kLo + 2;

std::array<double, kWidth> lagrange_weights(double t) {
  std::array<double, kWidth> w{};
  for (int o = -kLo; o <= kLo + 1; ++o) {
    double num = 1.0, den = 1.0;
    for (int q = -kLo; q <= kLo + 1; ++q) {
      if (q == o) continue;
      num *= t - q;
      den *= o - q;
    }
    w[static_cast<std::size_t>(o + kLo)] = num / den;
  }
  return w;
}

struct ShiftSplit {
  long k;        // whole cells
  double theta;  // fractional part in [0,1)
};

ShiftSplit split_shift(double s, double h, int n) {
  double cells = s / h;
  double fl = std::floor(cells);
  double theta = cells - fl;
  // snap round-off so grid-aligned shifts rotate exactly
  if (theta < 1e-12) theta = 0.0;
  if (theta > 1.0 - 1e-12) {
    theta = 0.0;
    fl += 1.0;
  }
  long k = static_cast<long>(std::fmod(fl, static_cast<double>(n)));
  if (k < 0) k += n;
  return {k, theta};
}

inline int wrap(long i, int n) {
  long r = i % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

void apply_stencil(std::span<const double> in, int n, const ShiftSplit& sp, std::span<double> out) {
  if (sp.theta == 0.0) {
    for (int j = 0; j < n; ++j) out[j] = in[wrap(j - sp.k, n)];
    return;
  }
  const auto w = lagrange_weights(1.0 - sp.theta);
  for (int j = 0; j < n; ++j) {
    long base = j - sp.k - 1;
    double acc = 0.0;
    for (int o = -kLo; o <= kLo + 1; ++o) acc += w[static_cast<std::size_t>(o + kLo)] * in[wrap(base + o, n)];
    out[j] = acc;
  }
}

}  // namespace

void translate_samples(std::span<const double> in, double h, double s, std::span<double> out) {
  const int n = static_cast<int>(in.size());
  if (static_cast<int>(out.size()) != n) throw GridMismatch();
  if (!std::isfinite(s)) throw Error("translate: non-finite shift");
  apply_stencil(in, n, split_shift(s, h, n), out);
}

void translate_density_samples(std::span<const double> in, double h, double s, std::span<double> out) {
  const int n = static_cast<int>(in.size());
  if (static_cast<int>(out.size()) != n) throw GridMismatch();
  if (!std::isfinite(s)) throw Error("translate: non-finite shift");
  const ShiftSplit sp = split_shift(s, h, n);
  apply_stencil(in, n, sp, out);
  if (sp.theta == 0.0) return;
  bool negative = false;
  for (int j = 0; j < n; ++j) negative = negative || out[j] < 0.0;
  if (!negative) return;
  // a cell of mass moving by theta cells splits between its two targets
  for (int j = 0; j < n; ++j) out[j] = (1.0 - sp.theta) * in[wrap(j - sp.k, n)] + sp.theta * in[wrap(j - sp.k - 1, n)];
}

ValueField translate(const ValueField& u, double s) {
  ValueField out(u.grid());
  translate_samples(u.values(), u.grid().h(), s, out.values());
  return out;
}

DensityField translate(const DensityField& m, double s) {
  DensityField out(m.grid());
  translate_density_samples(m.values(), m.grid().h(), s, out.values());
  return out;
}

SignedMeasure translate(const SignedMeasure& rho, double s) {
  SignedMeasure out(rho.grid());
  translate_samples(rho.values(), rho.grid().h(), s, out.values());
  return out;
}

double wasserstein1_samples(std::span<const double> m1, std::span<const double> m2, double h) {
  if (m1.size() != m2.size()) throw GridMismatch();
  const std::size_t n = m1.size();
  std::vector<double> g(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += h * (m1[i] - m2[i]);
    g[i] = acc;
  }
  std::vector<double> sorted = g;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(n / 2), sorted.end());
  const double c = sorted[n / 2];
  double d = 0.0;
  for (double x : g) d += std::abs(x - c);
  return h * d;
}

double wasserstein1(const DensityField& m1, const DensityField& m2) {
  if (!(m1.grid() == m2.grid())) throw GridMismatch();
  return wasserstein1_samples(m1.values(), m2.values(), m1.grid().h());
}

}  // namespace mfgcn
