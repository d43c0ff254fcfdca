#pragma once

#include <Eigen/Core>
#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssmrom/poly.hpp"
#include "ssmrom/trajectory.hpp"

namespace ssmrom {

// Right-hand side of an ODE, possibly time dependent, plus whatever ground
// truth is known about it for use in tests.
struct VectorField {
  int dimension = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> rhs;

  // Known-truth metadata for benchmark systems.
  std::vector<std::complex<double>> eigenvalues;           // linearization at 0
  std::optional<std::complex<double>> cubic_coefficient;   // beta + i*gamma when meaningful
  std::optional<double> limit_cycle_radius;
  std::string name;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x, double t) const { return rhs(x, t); }
};

// Classical fixed-step RK4. Samples at every step including the initial
// condition. Throws DivergenceError if the state leaves the finite range.
TimeSeries integrate_rk4(const VectorField& field, const Eigen::VectorXd& x0, double t0,
                         double t_end, double dt);

// --- benchmark systems -----------------------------------------------------

// x'' + damping x' + stiffness x + beta x^3 = f_amp cos(f_omega t),
// state (x, x').
VectorField duffing(double damping, double stiffness, double beta, double f_amp = 0.0,
                    double f_omega = 1.0);
// Single well: x'' + x' + x + beta x^3 = f cos(omega t), beta > 0.
VectorField duffing_single_well(double beta, double f_amp = 0.0, double f_omega = 1.0);
// Double well: x'' + x' - x + |beta| x^3 = 0, equilibria at 0 and
// +/- 1/sqrt(|beta|). The magnitude of beta is used so either sign
// convention for the cubic term selects the same two-well potential.
VectorField duffing_double_well(double beta);

// Planar oscillator whose polar form is rho' = alpha0 rho + beta rho^3,
// theta' = omega0 + gamma rho^2; state (Re z, Im z).
VectorField stuart_landau(double alpha0, double beta, double gamma, double omega0);

// Real linear testbed with the given spectrum (complex entries must come in
// conjugate pairs; they are realified into 2x2 rotation-scaling blocks).
VectorField modal_linear(const std::vector<std::complex<double>>& eigenvalues);

// Polynomial observable map R^n -> R^q given by coefficients over the
// monomial basis of orders 1..degree.
struct PolynomialObservable {
  int input_dim = 0;
  int output_dim = 0;
  int degree = 1;
  Eigen::MatrixXd coeffs;  // output_dim x monomial_count(input_dim, 1, degree)

  static PolynomialObservable identity(int dim);
  // Single output channel; terms are (exponent vector, coefficient).
  static PolynomialObservable scalar(
      int input_dim, int degree,
      const std::vector<std::pair<Eigen::VectorXi, double>>& terms);

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
  TimeSeries observe(const TimeSeries& states) const;
};

}  // namespace ssmrom
