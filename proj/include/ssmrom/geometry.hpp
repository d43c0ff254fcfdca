#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "ssmrom/poly.hpp"
#include "ssmrom/trajectory.hpp"

namespace ssmrom {

// Graph-style manifold parametrization over reduced coordinates:
//   eta = U1^T y,   y ~ V1 eta + V eta^{2:M}.
// In default mode U1 = V1 and V1^T V = 0; in fixed-projection mode the
// caller supplies U1 (e.g. POD modes) and only V is fit.
struct SsmChart {
  int p = 0;  // ambient dimension
  int d = 0;  // manifold dimension
  int M = 2;  // polynomial order of the parametrization
  Eigen::MatrixXd U1;  // p x d, orthonormal columns
  Eigen::MatrixXd V1;  // p x d
  Eigen::MatrixXd V;   // p x monomial_count(d, 2, M)
  double residual = 0.0;  // attained mean-square reconstruction error
  std::vector<std::string> warnings;

  MonomialBasis basis() const { return MonomialBasis(d, 2, M); }

  Eigen::VectorXd project(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd project(const Eigen::MatrixXd& ys) const;
  Eigen::VectorXd lift(const Eigen::VectorXd& eta) const;
  Eigen::MatrixXd lift(const Eigen::MatrixXd& etas) const;
};

struct FitSsmOptions {
  int d = 2;
  int M = 3;
  // Fixed projection (POD-style): U1 given, V1 = U1, only V is fit.
  std::optional<Eigen::MatrixXd> fixed_projection;
  double ridge = 0.0;      // Tikhonov weight on V for noisy data; 0 matches the plain objective
  int refine_iters = 0;    // joint U1 refinement steps (QR-retracted gradient descent)
};

SsmChart fit_ssm(const std::vector<EmbeddedTrajectory>& data, const FitSsmOptions& opts);
SsmChart fit_ssm(const Eigen::MatrixXd& points, const FitSsmOptions& opts);

// Mean-square reconstruction error of a chart on a point cloud.
double chart_residual(const SsmChart& chart, const Eigen::MatrixXd& points);

}  // namespace ssmrom
