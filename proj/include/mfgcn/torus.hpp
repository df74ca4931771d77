#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgcn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridMismatch : public Error {
 public:
  GridMismatch() : Error("grid mismatch") {}
};

/// Uniform periodic grid on the unit circle: nodes x_j = j*h, j = 0..n-1.
class Grid {
 public:
  explicit Grid(int n);

  int n() const { return n_; }
  double h() const { return h_; }
  double x(int j) const { return j * h_; }

  bool operator==(const Grid& other) const { return n_ == other.n_; }

 private:
  int n_;
  double h_;
};

struct ValueTag {};
struct DensityTag {};
struct MeasureTag {};

/// Samples of a function on a Grid. The tag distinguishes value functions
/// (nodal samples), probability densities (cell averages) and signed
/// measures (centered perturbations of densities).
template <class Tag>
class GridFunction {
 public:
  explicit GridFunction(const Grid& grid) : grid_(grid), v_(static_cast<std::size_t>(grid.n()), 0.0) {}
  GridFunction(const Grid& grid, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  int size() const { return grid_.n(); }

  double& operator[](int j) { return v_[static_cast<std::size_t>(j)]; }
  double operator[](int j) const { return v_[static_cast<std::size_t>(j)]; }

  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }
  const std::vector<double>& data() const { return v_; }

  GridFunction& operator+=(const GridFunction& o);
  GridFunction& operator-=(const GridFunction& o);
  GridFunction& operator*=(double s);

 private:
  Grid grid_;
  std::vector<double> v_;
};

using ValueField = GridFunction<ValueTag>;
using DensityField = GridFunction<DensityTag>;
using SignedMeasure = GridFunction<MeasureTag>;

template <class Tag>
GridFunction<Tag> operator+(GridFunction<Tag> a, const GridFunction<Tag>& b) {
  a += b;
  return a;
}
template <class Tag>
GridFunction<Tag> operator-(GridFunction<Tag> a, const GridFunction<Tag>& b) {
  a -= b;
  return a;
}
template <class Tag>
GridFunction<Tag> operator*(double s, GridFunction<Tag> a) {
  a *= s;
  return a;
}

/// h * sum of samples.
double integral(std::span<const double> v, double h);
template <class Tag>
double integral(const GridFunction<Tag>& f) {
  return integral(f.values(), f.grid().h());
}

double sup_norm(std::span<const double> v);
double l2_norm(std::span<const double> v, double h);

/// Throws Error unless the density is nonnegative with unit mass (within tol).
void validate_density(const DensityField& m, double tol = 1e-10);

DensityField uniform_density(const Grid& grid);
/// Unit mass concentrated in one cell (value 1/h).
DensityField point_mass(const Grid& grid, int cell);
/// Periodized Gaussian bump, normalized to unit mass.
DensityField bump_density(const Grid& grid, double center, double width);
/// Single-cell column of mass 1 minus the uniform density.
SignedMeasure centered_dirac(const Grid& grid, int cell);

template <class Tag>
GridFunction<Tag> retag(const Grid& grid, std::span<const double> v) {
  return GridFunction<Tag>(grid, std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// Finite-difference operators.

ValueField laplacian(const ValueField& u);

struct UpwindGradient {
  ValueField plus;   // (u_{j+1} - u_j) / h
  ValueField minus;  // (u_j - u_{j-1}) / h
};

UpwindGradient gradient_upwind(const ValueField& u);

/// Backward-Euler diffusion (I - nu*dt*Lap) x = b with a cyclic
/// tridiagonal factorization computed once per (n, nu*dt).
class DiffusionSolver {
 public:
  DiffusionSolver(const Grid& grid, double nu_dt);

  void solve_in_place(std::span<double> x) const;
  const Grid& grid() const { return grid_; }
  double nu_dt() const { return nu_dt_; }

 private:
  Grid grid_;
  double nu_dt_;
  double r_;
  std::vector<double> cprime_;
  std::vector<double> denom_;
  std::vector<double> z_;  // solution of the correction system
  double corr_;
};

template <class Tag>
GridFunction<Tag> implicit_diffusion_step(const GridFunction<Tag>& field, double nu, double dt) {
  if (nu < 0.0 || dt <= 0.0) throw Error("implicit_diffusion_step: need nu >= 0 and dt > 0");
  GridFunction<Tag> out = field;
  DiffusionSolver(field.grid(), nu * dt).solve_in_place(out.values());
  return out;
}

// ---------------------------------------------------------------------------
// Translation.

/// Periodic translation by s: out(x) = in(x - s). Uses an eight-point
/// Lagrange stencil; for s a multiple of h this is an exact rotation.
/// Translation by -s is the exact adjoint of translation by s.
void translate_samples(std::span<const double> in, double h, double s, std::span<double> out);

/// Mass-conservative translation of cell masses. The high-order stencil is
/// used when the result stays nonnegative, otherwise the linear
/// redistribution between the two overlapped cells.
void translate_density_samples(std::span<const double> in, double h, double s, std::span<double> out);

ValueField translate(const ValueField& u, double s);
DensityField translate(const DensityField& m, double s);
SignedMeasure translate(const SignedMeasure& rho, double s);

/// Wasserstein-1 distance on the circle for masses located at the nodes.
double wasserstein1(const DensityField& m1, const DensityField& m2);
double wasserstein1_samples(std::span<const double> m1, std::span<const double> m2, double h);

}  // namespace mfgcn
