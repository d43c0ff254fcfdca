#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "ssmrom/forced_response.hpp"
#include "ssmrom/poly.hpp"
#include "ssmrom/systems.hpp"
#include "ssmrom/trajectory.hpp"

namespace ssmrom {

// Polynomial vector field in modal (diagonalized) coordinates:
//   q' = Lambda q + g0(q),  g0(q) = sum_j G[j] q^(j)  for j = 2..max order.
// Eigenvalues are ordered with the target slow modes first; conjugate pairs
// are adjacent with the positive-imaginary member first. Coefficients close
// under conjugation so the realified field is real.
struct ModalSystem {
  int n = 0;
  Eigen::VectorXcd Lambda;
  std::vector<int> partner;          // conjugate partner index, self for real modes
  std::vector<Eigen::MatrixXcd> G;   // G[o] holds order o+2 coefficients, n x count(n, o+2)
  Eigen::MatrixXcd T;                // physical coordinates x = T q

  int coupling_max_order() const { return static_cast<int>(G.size()) + 1; }
  void validate() const;

  Eigen::VectorXcd g0(const Eigen::VectorXcd& q) const;
  // Real vector field in physical coordinates x = T q.
  VectorField realified() const;
};

// Incremental construction of conjugate-closed modal systems. Modes with
// nonzero imaginary part expand into a conjugate pair of coordinates;
// coupling terms are mirrored into the conjugate rows automatically.
class ModalSystemBuilder {
public:
  explicit ModalSystemBuilder(const std::vector<std::complex<double>>& modes);

  // Adds c * q^exponents to row `row` of the modal field (expanded indexing)
  // plus the conjugate-mirror term.
  ModalSystemBuilder& coupling(int row, const Eigen::VectorXi& exponents,
                               std::complex<double> c);

  ModalSystem build() const;

private:
  Eigen::VectorXcd lambda_;
  std::vector<int> partner_;
  struct Term {
    int row;
    Eigen::VectorXi exponents;
    std::complex<double> coeff;
  };
  std::vector<Term> terms_;
  int max_order_ = 1;
};

// Order-by-order solution of the manifold invariance equation: the
// parametrization q = sum_j W[j] z^(j) and reduced dynamics
// z' = sum_j N[j] z^(j) in the extended-normal-form style, plus the
// leading-order forcing response when present.
struct OracleModel {
  int n = 0;
  int m = 0;  // oscillator pairs on the manifold (reduced dimension 2m)
  int M = 1;  // expansion order
  std::vector<Eigen::MatrixXcd> W;  // W[j-1]: n x count(2m, j), j = 1..M
  std::vector<Eigen::MatrixXcd> N;  // N[j-1]: 2m x count(2m, j)

  struct Harmonic {
    Eigen::VectorXi k;
    Eigen::VectorXcd w_plus, w_minus;  // size n
    Eigen::VectorXcd n_plus, n_minus;  // size 2m
  };
  std::vector<Harmonic> harmonics;
  Eigen::VectorXd Omega;

  MonomialBasis basis(int order) const { return MonomialBasis(2 * m, order, order); }
  // Autonomous parametrization w0(z).
  Eigen::VectorXcd lift(const Eigen::VectorXcd& z) const;
  // Reduced field n0(z).
  Eigen::VectorXcd reduced_rhs(const Eigen::VectorXcd& z) const;
};

// Solves the autonomous invariance equation up to order M for the slow
// manifold of the first m oscillator pairs. Near-resonance inside the
// manifold block is decided on imaginary parts with tolerance delta; exact
// resonances in the outer block abort with a ResonanceError naming the
// offending (row, monomial, order).
OracleModel solve_autonomous_ssm(const ModalSystem& system, int m, int M, double delta = 1e-8);

// One forcing harmonic in modal coordinates: the k-th Fourier index with its
// coefficient vectors for e^{+i<k,phi>} and e^{-i<k,phi>}.
struct ModalForcing {
  Eigen::VectorXi k;
  Eigen::VectorXcd g_plus;   // size n
  Eigen::VectorXcd g_minus;  // size n
};

// Leading-order non-autonomous correction: resonant harmonics keep their
// forcing in the reduced dynamics, non-resonant ones are absorbed into the
// parametrization.
OracleModel solve_nonautonomous_leading(OracleModel model, const ModalSystem& system,
                                        const std::vector<ModalForcing>& forcing,
                                        const Eigen::VectorXd& Omega, double delta = 1e-8);

// Max-norm invariance-equation residual per order 1..M; every entry should
// sit at roundoff for a correctly solved model.
std::vector<double> invariance_residual(const ModalSystem& system, const OracleModel& model);

// Physical-space samples along a path in normal coordinates:
// x = T (w0(z) + epsilon * w1(Omega t)).
TimeSeries lift_and_sample(const OracleModel& model, const ModalSystem& system,
                           const Eigen::MatrixXcd& z_path, double t0, double dt,
                           double epsilon = 0.0);

// Polar form of the oracle's reduced dynamics (degree >= 2 terms of N).
PolarModel to_polar(const OracleModel& model);

// Forcing specification for the polar model from the oracle's reduced
// forcing vectors at the given epsilon.
ForcingSpec oracle_forcing_spec(const OracleModel& model, double epsilon);

// Integer spectral quotients of a spectral subspace (indices `inside`):
// absolute uses the whole same-stability spectrum, relative only the part
// outside the subspace. `outer_empty` flags the degenerate whole-spectrum
// case where the relative quotient is reported as 0.
struct SpectralQuotients {
  int absolute = 0;
  int relative = 0;
  bool outer_empty = false;
};
SpectralQuotients spectral_quotients(const Eigen::VectorXcd& lambda,
                                     const std::vector<int>& inside);

// Exhaustive low-order resonance check between a spectral subspace and the
// outer spectrum: real-part condition (relevant under forcing) and the full
// complex condition (autonomous case).
struct ResonanceViolation {
  Eigen::VectorXi exponents;  // multi-index over the inside eigenvalues
  int outer_index = 0;
  double mismatch = 0.0;
};
struct NonresonanceReport {
  int order_cap = 0;
  std::vector<ResonanceViolation> real_violations;
  std::vector<ResonanceViolation> complex_violations;
  bool clean() const { return real_violations.empty() && complex_violations.empty(); }
};
NonresonanceReport check_nonresonance(const Eigen::VectorXcd& lambda,
                                      const std::vector<int>& inside, int order_cap,
                                      double tol = 1e-10);

}  // namespace ssmrom
