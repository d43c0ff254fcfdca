#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "ssmrom/errors.hpp"
#include "ssmrom/trajectory.hpp"

namespace ssmrom {

// Polar normal form of one oscillatory mode: polynomials in rho^2,
//   alpha(rho) = alpha[0] + alpha[1] rho^2 + alpha[2] rho^4 + ...  [1/s]
//   omega(rho) = omega[0] + omega[1] rho^2 + ...                   [rad/s]
struct PolarMode {
  std::vector<double> alpha;
  std::vector<double> omega;
  double rho_max = 0.0;  // largest training amplitude; 0 when unknown
};

struct PolarModel {
  std::vector<PolarMode> modes;

  int mode_count() const { return static_cast<int>(modes.size()); }
  double alpha_at(int mode, double rho) const;
  double omega_at(int mode, double rho) const;
  double dalpha_drho(int mode, double rho) const;
  double domega_drho(int mode, double rho) const;

  // Change of amplitude units rho -> kappa * rho (coefficient k scales by
  // kappa^{-2k}); used to express coefficients in observable amplitude.
  PolarModel rescaled_amplitude(double kappa) const;
};

// One quasiperiodic forcing term acting on one mode: amplitude f_jk >= 0,
// phase phi_jk, harmonic index vector k against the base frequencies Omega,
// and the sign set it belongs to (+1 for K+, -1 for K-).
struct ForcingHarmonic {
  int mode = 0;
  Eigen::VectorXi k;
  double amplitude = 0.0;
  double phase = 0.0;
  int sign = +1;
};

struct ForcingSpec {
  Eigen::VectorXd Omega;  // base frequencies, rad/s
  std::vector<ForcingHarmonic> harmonics;

  // Throws if some (mode, k) appears in both sign sets.
  void validate(int modes) const;
};

// Fixed point of the autonomous polar-phase dynamics under single-harmonic
// periodic forcing: the closed-form forced-response point.
struct FrcPoint {
  double Omega = 0.0;
  double rho0 = 0.0;
  double psi0 = 0.0;
  bool stable = false;
  bool marginal = false;     // |Re eig| at the stability threshold
  int branch_sign = +1;      // sign of the square root branch
  double growth_rate = 0.0;  // largest eigenvalue real part of the local linearization
};

// Sweeps the response amplitude grid and emits both closed-form FRC branches
//   Omega = omega(rho0) +/- sqrt(f^2/rho0^2 - alpha^2(rho0)),
// skipping grid points outside the response region. Single-mode models only.
std::vector<FrcPoint> frc_sweep(const PolarModel& polar, double f,
                                const Eigen::VectorXd& rho_grid);

// Stability of an FRC point from the 2x2 Jacobian of the (rho, psi) dynamics.
bool frc_stability(const PolarModel& polar, double f, FrcPoint& point);

// Dissipative backbone curve omega(rho) on the grid.
std::vector<std::pair<double, double>> backbone(const PolarModel& polar,
                                                const Eigen::VectorXd& rho_grid);

// Closed-form forcing calibration: f = rho0 sqrt((Omega - omega(rho0))^2 + alpha^2(rho0)).
double calibrate_forcing(const PolarModel& polar, double Omega, double rho0_measured);

struct PolarSimResult {
  TimeSeries trajectory;    // rows rho_1..rho_m, theta_1..theta_m
  bool hit_amplitude_guard = false;
  double guard_time = 0.0;  // first time a rho was clamped at the guard
};

// RK4 integration of the forced polar normal form
//   rho_j' = alpha_j(rho_j) rho_j - sum f sin(<k,Omega> t + phi -/+ theta_j)
//   theta_j' = omega_j(rho_j) + sum (f/rho_j) cos(<k,Omega> t + phi -/+ theta_j)
// with the amplitude clamped at a small positive guard where the f/rho term
// is singular.
PolarSimResult simulate_polar(const PolarModel& polar, const ForcingSpec& forcing,
                              const Eigen::VectorXd& rho0, const Eigen::VectorXd& theta0,
                              double t0, double t_end, double dt);

// Resonant harmonic sets per mode: indices k (canonical half-lattice
// representative, |k|_1 <= kmax) with |omega_j(0) -/+ <k,Omega>| <= delta.
struct ResonantHarmonics {
  std::vector<Eigen::VectorXi> k_plus;
  std::vector<Eigen::VectorXi> k_minus;
};
std::vector<ResonantHarmonics> resonant_harmonics(const PolarModel& polar,
                                                  const Eigen::VectorXd& Omega, int kmax,
                                                  double delta);

}  // namespace ssmrom
