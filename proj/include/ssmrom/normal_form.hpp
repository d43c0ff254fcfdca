#pragma once

#include <Eigen/Core>
#include <complex>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "ssmrom/forced_response.hpp"
#include "ssmrom/poly.hpp"

namespace ssmrom {

// Linear part of the reduced dynamics: Jacobian at the origin with its
// eigendecomposition. Eigenvalues are ordered by decreasing real part with
// conjugate pairs adjacent, the positive-imaginary member first; eigenvector
// columns have unit norm and their largest-modulus entry real positive.
struct LinearPart {
  Eigen::MatrixXd jacobian;
  Eigen::MatrixXcd B;
  Eigen::VectorXcd Lambda;
  std::vector<int> partner;  // conjugate partner index per row, self for real modes

  int dim() const { return static_cast<int>(Lambda.size()); }
  bool all_oscillatory() const;
};

// Fits d x d linear dynamics to the samples with ||state|| <= amplitude_cutoff
// and eigendecomposes the result. Throws if too few low-amplitude samples are
// available or the Jacobian is defective within tolerance.
LinearPart estimate_linear_part(const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& derivatives,
                                double amplitude_cutoff);

// Builds a LinearPart from a known Jacobian (no regression step).
LinearPart linear_part_from_jacobian(const Eigen::MatrixXd& jacobian);

// Near-resonance bookkeeping: Delta(j,k) = Im(Lambda_j) - sum_s Im(Lambda_s) E(s,k)
// over the monomial family of orders 2..N, with the resonant set S collecting
// entries with |Delta| <= delta.
struct ResonanceStructure {
  int N = 2;
  double delta = 1e-8;
  MonomialBasis basis;  // dims = d, orders 2..N
  Eigen::MatrixXd Delta;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> resonant;
  std::vector<std::pair<int, int>> resonant_entries;  // (row, column), row-major order

  ResonanceStructure(int d, int N, double delta)
      : N(N), delta(delta), basis(d, 2, N) {}
};

ResonanceStructure resonance_structure(const LinearPart& linear, int N, double delta = 1e-8);

// Extended normal form of the reduced dynamics together with both coordinate
// transforms:
//   n(z) = Lambda z + Ncoef z^{2:N}
//   h^{-1}(eta) = B^{-1} eta + Hstar (B^{-1} eta)^{2:N}   (reduced -> normal)
//   h(z) = B (z + H z^{2:N})                              (normal -> reduced)
// Ncoef is nonzero only on the resonant set; Hstar and H vanish on it.
struct ReducedModel {
  LinearPart linear;
  ResonanceStructure structure;
  Eigen::MatrixXcd Ncoef;
  Eigen::MatrixXcd Hstar;
  Eigen::MatrixXcd H;
  double conjugacy_residual = 0.0;  // attained value of the fit objective
  int iterations = 0;
  bool converged = false;
  bool marginal_linear_part = false;  // some |Re lambda| ~ 0; allowed, but flagged
  std::vector<double> training_rho_max;  // per mode, largest |z| seen while fitting

  const MonomialBasis& basis() const { return structure.basis; }
  int dim() const { return linear.dim(); }
  int modes() const { return linear.dim() / 2; }
};

struct NormalFormOptions {
  int max_iterations = 500;
  double tolerance = 1e-9;  // relative residual-change stopping rule
  bool one_step_map = false;  // discrete fallback: 1-step prediction residual
  double map_dt = 0.0;        // sampling time for the map formulation
  bool throw_on_max_iterations = true;
  // Warm start (Hstar, Ncoef); zero per default. Entries outside the mask are ignored.
  std::optional<std::pair<Eigen::MatrixXcd, Eigen::MatrixXcd>> initial;
};

// Continuous-time fit: minimizes sum_j || d/dt h^{-1}(eta_j) - n(h^{-1}(eta_j)) ||^2
// over the free entries of (Hstar, Ncoef), zero-initialized, then recovers H by
// regression. `states` and `derivatives` are d x P aligned samples.
ReducedModel fit_normal_form(const Eigen::MatrixXd& states, const Eigen::MatrixXd& derivatives,
                             const LinearPart& linear, const ResonanceStructure& structure,
                             const NormalFormOptions& opts = {});

// Discrete fallback for coarsely sampled data: minimizes the 1-step prediction
// error of the normal-form flow map over each trajectory.
ReducedModel fit_normal_form_map(const std::vector<Eigen::MatrixXd>& trajectories, double dt,
                                 const LinearPart& linear, const ResonanceStructure& structure,
                                 NormalFormOptions opts = {});

class NormalFormConvergenceError : public ConvergenceError {
public:
  NormalFormConvergenceError(const std::string& msg, double residual,
                             std::shared_ptr<ReducedModel> best)
      : ConvergenceError(msg, residual), best(std::move(best)) {}
  std::shared_ptr<ReducedModel> best;
};

// Coordinate transforms.
Eigen::VectorXcd to_normal_coordinates(const ReducedModel& model, const Eigen::VectorXd& eta);
Eigen::MatrixXcd to_normal_coordinates(const ReducedModel& model, const Eigen::MatrixXd& etas);
Eigen::VectorXcd to_reduced_coordinates(const ReducedModel& model, const Eigen::VectorXcd& z);
Eigen::MatrixXcd to_reduced_coordinates(const ReducedModel& model, const Eigen::MatrixXcd& zs);

// Normal-form vector field and a fixed-step RK4 flow for it.
Eigen::VectorXcd normal_form_rhs(const ReducedModel& model, const Eigen::VectorXcd& z);
Eigen::MatrixXcd integrate_normal_form(const ReducedModel& model, const Eigen::VectorXcd& z0,
                                       Eigen::Index steps, double dt);

// Conjugacy error of a model on a data set (the Eq.-style sum of squared norms).
double conjugacy_error(const ReducedModel& model, const Eigen::MatrixXd& states,
                       const Eigen::MatrixXd& derivatives);

// Polar form of a non-resonant oscillatory normal form: per mode j,
//   alpha_j(rho) = Re(lambda_j) + sum_k Re(c_k) rho^{2k},
//   omega_j(rho) = Im(lambda_j) + sum_k Im(c_k) rho^{2k},
// read off the coefficients of the self-resonant monomials z_j |z_j|^{2k}.
// Cross-mode resonant coefficients raise UnsupportedStructureError.
PolarModel polar_from_normal_form(const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& coeffs,
                                  const MonomialBasis& basis, double coeff_tol = 0.0);
PolarModel to_polar(const ReducedModel& model);

namespace detail {

// The conjugacy-error least-squares problem over the free (masked) complex
// coefficients, parameterized by real unknowns: one (Re, Im) pair per free
// entry of a primary (even-index) row; conjugate rows mirror automatically.
// Exposed so tests can check the analytic Jacobian against finite differences.
class ConjugacyProblem {
public:
  ConjugacyProblem(const Eigen::MatrixXd& states, const Eigen::MatrixXd& derivatives,
                   const LinearPart& linear, const ResonanceStructure& structure);

  int num_params() const { return 2 * static_cast<int>(free_entries_.size()); }
  Eigen::Index num_residuals() const { return 2 * zeta_.rows() * zeta_.cols(); }

  Eigen::VectorXd pack(const Eigen::MatrixXcd& Hstar, const Eigen::MatrixXcd& Ncoef) const;
  void unpack(const Eigen::VectorXd& params, Eigen::MatrixXcd& Hstar,
              Eigen::MatrixXcd& Ncoef) const;

  // Complex residual stacked column-major (d x P flattened).
  Eigen::VectorXcd residual(const Eigen::VectorXd& params) const;
  // Complex Jacobian of the residual with respect to the real parameters.
  Eigen::MatrixXcd jacobian(const Eigen::VectorXd& params) const;

  double objective(const Eigen::VectorXd& params) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& params) const;

  // Normal coordinates of every sample at the given parameters.
  Eigen::MatrixXcd normal_states(const Eigen::VectorXd& params) const;

private:
  struct FreeEntry {
    int row;   // primary row
    int col;
    int row2;  // conjugate row
    int col2;  // pair-swapped column
    bool in_normal_form;  // true: Ncoef entry, false: Hstar entry
  };

  const LinearPart& linear_;
  const ResonanceStructure& structure_;
  Eigen::MatrixXcd zeta_;      // B^{-1} eta
  Eigen::MatrixXcd zeta_dot_;  // B^{-1} eta_dot
  Eigen::MatrixXcd mono_zeta_;
  Eigen::MatrixXcd mono_dot_;  // d/dt of the zeta monomials
  std::vector<int> conj_col_;
  std::vector<FreeEntry> free_entries_;
};

}  // namespace detail

}  // namespace ssmrom
