#include "ssmrom/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iostream>

namespace ssmrom {

Eigen::VectorXd SsmChart::project(const Eigen::VectorXd& y) const {
  if (y.size() != p) throw ArgumentError("SsmChart::project: point dimension mismatch");
  return U1.transpose() * y;
}

Eigen::MatrixXd SsmChart::project(const Eigen::MatrixXd& ys) const {
  if (ys.rows() != p) throw ArgumentError("SsmChart::project: point dimension mismatch");
  return U1.transpose() * ys;
}

Eigen::VectorXd SsmChart::lift(const Eigen::VectorXd& eta) const {
  if (eta.size() != d) throw ArgumentError("SsmChart::lift: coordinate dimension mismatch");
  return V1 * eta + V * basis().eval<double>(eta);
}

Eigen::MatrixXd SsmChart::lift(const Eigen::MatrixXd& etas) const {
  if (etas.rows() != d) throw ArgumentError("SsmChart::lift: coordinate dimension mismatch");
  return V1 * etas + V * basis().eval_batch<double>(etas);
}

double chart_residual(const SsmChart& chart, const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd diff = points - chart.lift(chart.project(points));
  return diff.squaredNorm() / static_cast<double>(points.cols());
}

namespace {

// Deterministic sign convention: the entry of largest magnitude is positive.
void fix_column_signs(Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::Index imax = 0;
    m.col(c).cwiseAbs().maxCoeff(&imax);
    if (m(imax, c) < 0.0) m.col(c) = -m.col(c);
  }
}

// Least-squares fit of V on the projector residual. Monomial columns of
// different orders live on wildly different scales, so the rank check and the
// solve run on the correlation-normalized Gram matrix; a deficiency names the
// first polynomial order whose block is degenerate.
Eigen::MatrixXd solve_nonlinear_coeffs(const Eigen::MatrixXd& points,
                                       const Eigen::MatrixXd& U1, const MonomialBasis& basis,
                                       double ridge) {
  const Eigen::MatrixXd eta = U1.transpose() * points;
  const Eigen::MatrixXd mono = basis.eval_batch<double>(eta);
  const Eigen::MatrixXd resid = points - U1 * eta;

  Eigen::MatrixXd gram = mono * mono.transpose();
  const double scale = gram.diagonal().maxCoeff();
  if (!(scale > 0.0))
    throw SingularFitError("fit_ssm: all reduced coordinates vanish; data is degenerate");

  auto deficient_order = [&](double tol) -> int {
    for (int j = basis.min_order(); j <= basis.max_order(); ++j) {
      auto [first, last] = basis.order_block(j);
      const Eigen::MatrixXd sub = gram.block(first, first, last - first, last - first);
      if (sub.diagonal().minCoeff() <= 0.0) return j;
      const Eigen::VectorXd dinv = sub.diagonal().cwiseSqrt().cwiseInverse();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sub_es(dinv.asDiagonal() * sub *
                                                            dinv.asDiagonal());
      if (sub_es.eigenvalues().minCoeff() < tol) return j;
    }
    return -1;
  };

  if (gram.diagonal().minCoeff() <= 0.0)
    throw SingularFitError("fit_ssm: regression matrix is rank deficient at order " +
                           std::to_string(std::max(deficient_order(1e-12), basis.min_order())) +
                           "; add trajectories or lower M");

  const Eigen::VectorXd dinv = gram.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd corr = dinv.asDiagonal() * gram * dinv.asDiagonal();
  if (ridge == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
    if (es.eigenvalues().minCoeff() < 1e-12) {
      const int order = deficient_order(1e-12);
      throw SingularFitError(
          "fit_ssm: regression matrix is rank deficient" +
          (order > 0 ? " at order " + std::to_string(order) : std::string()) +
          "; add trajectories or lower M");
    }
  } else {
    corr.diagonal().array() += ridge;
  }
  // G V^T = M R^T with G = D^{1/2} C D^{1/2}.
  const Eigen::MatrixXd rhs = dinv.asDiagonal() * (mono * resid.transpose());
  return (dinv.asDiagonal() * corr.ldlt().solve(rhs)).transpose();
}

double objective(const Eigen::MatrixXd& points, const Eigen::MatrixXd& U1,
                 const Eigen::MatrixXd& V, const MonomialBasis& basis) {
  const Eigen::MatrixXd eta = U1.transpose() * points;
  const Eigen::MatrixXd diff = points - U1 * eta - V * basis.eval_batch<double>(eta);
  return diff.squaredNorm();
}

// Euclidean gradient of the reconstruction error with respect to U1, holding
// the V coefficients fixed (they are re-solved after every accepted step).
Eigen::MatrixXd objective_gradient(const Eigen::MatrixXd& points, const Eigen::MatrixXd& U1,
                                   const Eigen::MatrixXd& V, const MonomialBasis& basis) {
  const Eigen::Index P = points.cols();
  const Eigen::MatrixXd eta = U1.transpose() * points;
  const Eigen::MatrixXd mono = basis.eval_batch<double>(eta);
  const Eigen::MatrixXd resid = points - U1 * eta - V * mono;

  Eigen::MatrixXd grad = -2.0 * resid * eta.transpose();
  // Chain-rule part through eta = U1^T y.
  Eigen::MatrixXd accum = Eigen::MatrixXd::Zero(U1.rows(), U1.cols());
  for (Eigen::Index j = 0; j < P; ++j) {
    const Eigen::MatrixXd jac = basis.jacobian<double>(eta.col(j));  // mono x d
    const Eigen::RowVectorXd rU = resid.col(j).transpose() * U1;
    const Eigen::RowVectorXd rVJ = (resid.col(j).transpose() * V) * jac;
    accum += points.col(j) * (rU + rVJ);
  }
  grad -= 2.0 * accum;
  return grad;
}

}  // namespace

SsmChart fit_ssm(const std::vector<EmbeddedTrajectory>& data, const FitSsmOptions& opts) {
  Eigen::Index total = 0;
  if (data.empty()) throw ArgumentError("fit_ssm: no trajectories");
  const Eigen::Index p = data.front().dim();
  for (const auto& traj : data) {
    if (traj.dim() != p) throw ArgumentError("fit_ssm: mixed embedding dimensions");
    total += traj.size();
  }
  Eigen::MatrixXd points(p, total);
  Eigen::Index at = 0;
  for (const auto& traj : data) {
    points.middleCols(at, traj.size()) = traj.points;
    at += traj.size();
  }
  return fit_ssm(points, opts);
}

SsmChart fit_ssm(const Eigen::MatrixXd& points, const FitSsmOptions& opts) {
  const Eigen::Index p = points.rows();
  const Eigen::Index P = points.cols();
  if (opts.d < 1 || opts.d > p) throw ArgumentError("fit_ssm: need 1 <= d <= ambient dimension");
  if (opts.M < 2) throw ArgumentError("fit_ssm: M must be >= 2");

  MonomialBasis basis(opts.d, 2, opts.M);
  const long free_coeffs = opts.d + basis.count();  // per ambient channel
  if (P < 10 * free_coeffs)
    throw ArgumentError("fit_ssm: " + std::to_string(P) + " points cannot support " +
                        std::to_string(free_coeffs) +
                        " coefficients per channel (need 10x as many)");

  SsmChart chart;
  chart.p = static_cast<int>(p);
  chart.d = opts.d;
  chart.M = opts.M;
  if (2 * opts.d >= p)
    chart.warnings.push_back("ambient dimension p=" + std::to_string(p) +
                             " does not satisfy p > 2d; embedding may self-intersect");

  if (opts.fixed_projection) {
    chart.U1 = *opts.fixed_projection;
    if (chart.U1.rows() != p || chart.U1.cols() != opts.d)
      throw ArgumentError("fit_ssm: fixed projection has wrong shape");
    if ((chart.U1.transpose() * chart.U1 - Eigen::MatrixXd::Identity(opts.d, opts.d))
            .cwiseAbs()
            .maxCoeff() > 1e-10)
      throw ArgumentError("fit_ssm: fixed projection columns must be orthonormal");
  } else {
    // PCA initialization: leading left singular vectors of the data matrix,
    // via the p x p Gram matrix (p stays small even for long trajectories).
    const Eigen::MatrixXd gram = points * points.transpose();
    if (gram.diagonal().maxCoeff() <= 0.0)
      throw SingularFitError("fit_ssm: all data points are at the origin");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.eigenvalues()(p - opts.d) < 1e-24 * es.eigenvalues()(p - 1))
      throw SingularFitError("fit_ssm: data has rank below the requested manifold dimension");
    chart.U1.resize(p, opts.d);
    for (int c = 0; c < opts.d; ++c) chart.U1.col(c) = es.eigenvectors().col(p - 1 - c);
    fix_column_signs(chart.U1);
  }

  chart.V1 = chart.U1;
  chart.V = solve_nonlinear_coeffs(points, chart.U1, basis, opts.ridge);

  // Optional joint refinement of the projection with orthogonality kept by
  // QR retraction; V is re-solved in closed form after each accepted step.
  if (opts.refine_iters > 0 && !opts.fixed_projection) {
    double step = 1.0;
    double best = objective(points, chart.U1, chart.V, basis);
    for (int it = 0; it < opts.refine_iters; ++it) {
      Eigen::MatrixXd grad = objective_gradient(points, chart.U1, chart.V, basis);
      // Tangent projection on the Stiefel manifold.
      const Eigen::MatrixXd sym =
          0.5 * (chart.U1.transpose() * grad + grad.transpose() * chart.U1);
      grad -= chart.U1 * sym;
      const double gnorm = grad.norm();
      if (gnorm < 1e-14 * std::max(1.0, best)) break;
      bool accepted = false;
      while (step > 1e-12) {
        Eigen::MatrixXd trial = chart.U1 - step / gnorm * grad;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(trial);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, opts.d);
        // Keep column orientation stable across the retraction.
        for (int c = 0; c < opts.d; ++c)
          if (q.col(c).dot(chart.U1.col(c)) < 0.0) q.col(c) = -q.col(c);
        const Eigen::MatrixXd v_trial = solve_nonlinear_coeffs(points, q, basis, opts.ridge);
        const double trial_obj = objective(points, q, v_trial, basis);
        if (trial_obj < best) {
          chart.U1 = q;
          chart.V1 = q;
          chart.V = v_trial;
          best = trial_obj;
          step *= 1.5;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
  }

  chart.residual = objective(points, chart.U1, chart.V, basis) / static_cast<double>(P);
  return chart;
}

}  // namespace ssmrom
