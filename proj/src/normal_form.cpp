#include "ssmrom/normal_form.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmrom {

using Cplx = std::complex<double>;

bool LinearPart::all_oscillatory() const {
  for (int i = 0; i < dim(); ++i)
    if (partner[static_cast<size_t>(i)] == i) return false;
  return true;
}

namespace {

// Unit norm, largest-modulus entry rotated to the positive real axis.
void normalize_eigenvector(Eigen::VectorXcd& v) {
  v.normalize();
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  const Cplx pivot = v[imax];
  if (std::abs(pivot) > 0.0) v *= std::conj(pivot) / std::abs(pivot);
}

LinearPart decompose_jacobian(const Eigen::MatrixXd& A) {
  const int d = static_cast<int>(A.rows());
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success)
    throw SingularFitError("estimate_linear_part: eigendecomposition failed");

  const Eigen::VectorXcd vals = es.eigenvalues();
  const double scale = std::max(vals.cwiseAbs().maxCoeff(), 1e-300);

  // Group conjugate pairs, then order groups by decreasing real part.
  std::vector<bool> used(static_cast<size_t>(d), false);
  struct Group {
    int i;        // positive-imaginary member (or the sole real one)
    int j;        // conjugate partner, -1 for real
    double re;
    double im;
  };
  std::vector<Group> groups;
  for (int i = 0; i < d; ++i) {
    if (used[static_cast<size_t>(i)]) continue;
    used[static_cast<size_t>(i)] = true;
    const Cplx lam = vals[i];
    if (std::abs(lam.imag()) <= 1e-12 * scale) {
      groups.push_back({i, -1, lam.real(), 0.0});
      continue;
    }
    int match = -1;
    double best = 1e-8 * scale;
    for (int j = 0; j < d; ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      const double dist = std::abs(vals[j] - std::conj(lam));
      if (dist < best) {
        best = dist;
        match = j;
      }
    }
    if (match < 0)
      throw SingularFitError("estimate_linear_part: eigenvalues do not close under "
                             "conjugation; Jacobian is not real-diagonalizable");
    used[static_cast<size_t>(match)] = true;
    const int ipos = lam.imag() > 0.0 ? i : match;
    const int ineg = lam.imag() > 0.0 ? match : i;
    groups.push_back({ipos, ineg, lam.real(), std::abs(lam.imag())});
  }
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.re != b.re) return a.re > b.re;
    return a.im > b.im;
  });

  LinearPart out;
  out.jacobian = A;
  out.Lambda.resize(d);
  out.B.resize(d, d);
  out.partner.assign(static_cast<size_t>(d), 0);
  int at = 0;
  for (const auto& g : groups) {
    if (g.j < 0) {
      out.Lambda[at] = Cplx(g.re, 0.0);
      Eigen::VectorXcd v = es.eigenvectors().col(g.i);
      normalize_eigenvector(v);
      out.B.col(at) = v;
      out.partner[static_cast<size_t>(at)] = at;
      at += 1;
    } else {
      Eigen::VectorXcd v = es.eigenvectors().col(g.i);
      if (vals[g.i].imag() < 0.0) v = v.conjugate();
      normalize_eigenvector(v);
      out.Lambda[at] = Cplx(g.re, g.im);
      out.Lambda[at + 1] = Cplx(g.re, -g.im);
      out.B.col(at) = v;
      out.B.col(at + 1) = v.conjugate();
      out.partner[static_cast<size_t>(at)] = at + 1;
      out.partner[static_cast<size_t>(at + 1)] = at;
      at += 2;
    }
  }

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(out.B);
  if (svd.singularValues()(d - 1) < 1e-8 * svd.singularValues()(0))
    throw SingularFitError("estimate_linear_part: Jacobian is defective (non-semisimple) "
                           "within tolerance");
  const double resid = (A.cast<Cplx>() * out.B - out.B * out.Lambda.asDiagonal()).norm();
  if (resid > 1e-8 * std::max(1.0, A.norm()) * std::sqrt(static_cast<double>(d)))
    throw SingularFitError("estimate_linear_part: eigendecomposition residual too large");
  return out;
}

}  // namespace

LinearPart linear_part_from_jacobian(const Eigen::MatrixXd& jacobian) {
  if (jacobian.rows() != jacobian.cols() || jacobian.rows() < 1)
    throw ArgumentError("linear_part_from_jacobian: need a square matrix");
  return decompose_jacobian(jacobian);
}

LinearPart estimate_linear_part(const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& derivatives,
                                double amplitude_cutoff) {
  if (states.rows() != derivatives.rows() || states.cols() != derivatives.cols())
    throw ArgumentError("estimate_linear_part: states/derivatives shape mismatch");
  const int d = static_cast<int>(states.rows());
  if (amplitude_cutoff <= 0.0)
    throw ArgumentError("estimate_linear_part: amplitude cutoff must be positive");

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < states.cols(); ++j)
    if (states.col(j).norm() <= amplitude_cutoff) keep.push_back(j);
  const auto needed = static_cast<Eigen::Index>(10 * d * d);
  if (static_cast<Eigen::Index>(keep.size()) < needed)
    throw ArgumentError("estimate_linear_part: only " + std::to_string(keep.size()) +
                        " samples below the amplitude cutoff, need " + std::to_string(needed) +
                        "; increase the cutoff or supply longer decays");

  Eigen::MatrixXd X(d, static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd Y(d, static_cast<Eigen::Index>(keep.size()));
  for (size_t idx = 0; idx < keep.size(); ++idx) {
    X.col(static_cast<Eigen::Index>(idx)) = states.col(keep[idx]);
    Y.col(static_cast<Eigen::Index>(idx)) = derivatives.col(keep[idx]);
  }
  const Eigen::MatrixXd gram = X * X.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(gram);
  if (check.eigenvalues().minCoeff() < 1e-12 * check.eigenvalues().maxCoeff())
    throw SingularFitError("estimate_linear_part: low-amplitude samples do not excite "
                           "all reduced directions");
  const Eigen::MatrixXd A = gram.ldlt().solve(X * Y.transpose()).transpose();
  return decompose_jacobian(A);
}

ResonanceStructure resonance_structure(const LinearPart& linear, int N, double delta) {
  if (N < 2) throw ArgumentError("resonance_structure: N must be >= 2");
  const int d = linear.dim();
  ResonanceStructure out(d, N, delta);
  const int count = out.basis.count();
  out.Delta.resize(d, count);
  const Eigen::VectorXd im = linear.Lambda.imag();
  const Eigen::MatrixXi& E = out.basis.exponents();

  std::vector<int> conj_col;
  const bool paired = linear.all_oscillatory();
  if (paired) conj_col = out.basis.conjugate_permutation();

  for (int r = 0; r < d; ++r) {
    const int pr = linear.partner[static_cast<size_t>(r)];
    if (paired && pr < r) {
      // Mirror the primary row so conjugate symmetry of the mask is exact.
      for (int c = 0; c < count; ++c) out.Delta(r, conj_col[static_cast<size_t>(c)]) = -out.Delta(pr, c);
      continue;
    }
    for (int c = 0; c < count; ++c) {
      double acc = im[r];
      for (int s = 0; s < d; ++s) acc -= im[s] * static_cast<double>(E(s, c));
      out.Delta(r, c) = acc;
    }
  }

  out.resonant.resize(d, count);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < count; ++c) {
      out.resonant(r, c) = std::abs(out.Delta(r, c)) <= delta;
      if (out.resonant(r, c)) out.resonant_entries.emplace_back(r, c);
    }
  return out;
}

// --- conjugacy problem -------------------------------------------------------

namespace detail {

ConjugacyProblem::ConjugacyProblem(const Eigen::MatrixXd& states,
                                   const Eigen::MatrixXd& derivatives,
                                   const LinearPart& linear,
                                   const ResonanceStructure& structure)
    : linear_(linear), structure_(structure) {
  const int d = linear.dim();
  if (states.rows() != d) throw ArgumentError("fit_normal_form: state dimension mismatch");
  if (derivatives.rows() != states.rows() || derivatives.cols() != states.cols())
    throw ArgumentError("fit_normal_form: states/derivatives must be aligned");
  if (structure.basis.dims() != d)
    throw ArgumentError("fit_normal_form: resonance structure order/dimension mismatch");
  if (!linear.all_oscillatory())
    throw ArgumentError("fit_normal_form: linear part must consist of oscillatory "
                        "conjugate pairs");

  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(linear.B);
  zeta_ = lu.solve(states.cast<Cplx>());
  zeta_dot_ = lu.solve(derivatives.cast<Cplx>());
  mono_zeta_ = structure.basis.eval_batch<Cplx>(zeta_);
  mono_dot_.resize(mono_zeta_.rows(), mono_zeta_.cols());
  for (Eigen::Index j = 0; j < zeta_.cols(); ++j) {
    const Eigen::MatrixXcd jac = structure.basis.jacobian<Cplx>(zeta_.col(j));
    mono_dot_.col(j) = jac * zeta_dot_.col(j);
  }
  conj_col_ = structure.basis.conjugate_permutation();

  for (int r = 0; r < d; r += 2)
    for (int c = 0; c < structure.basis.count(); ++c)
      free_entries_.push_back({r, c, linear.partner[static_cast<size_t>(r)],
                               conj_col_[static_cast<size_t>(c)], structure.resonant(r, c)});
}

Eigen::VectorXd ConjugacyProblem::pack(const Eigen::MatrixXcd& Hstar,
                                       const Eigen::MatrixXcd& Ncoef) const {
  Eigen::VectorXd out(num_params());
  for (size_t q = 0; q < free_entries_.size(); ++q) {
    const auto& e = free_entries_[q];
    const Cplx v = e.in_normal_form ? Ncoef(e.row, e.col) : Hstar(e.row, e.col);
    out[2 * static_cast<Eigen::Index>(q)] = v.real();
    out[2 * static_cast<Eigen::Index>(q) + 1] = v.imag();
  }
  return out;
}

void ConjugacyProblem::unpack(const Eigen::VectorXd& params, Eigen::MatrixXcd& Hstar,
                              Eigen::MatrixXcd& Ncoef) const {
  const int d = linear_.dim();
  const int count = structure_.basis.count();
  Hstar = Eigen::MatrixXcd::Zero(d, count);
  Ncoef = Eigen::MatrixXcd::Zero(d, count);
  for (size_t q = 0; q < free_entries_.size(); ++q) {
    const auto& e = free_entries_[q];
    const Cplx v(params[2 * static_cast<Eigen::Index>(q)],
                 params[2 * static_cast<Eigen::Index>(q) + 1]);
    if (e.in_normal_form) {
      Ncoef(e.row, e.col) = v;
      Ncoef(e.row2, e.col2) = std::conj(v);
    } else {
      Hstar(e.row, e.col) = v;
      Hstar(e.row2, e.col2) = std::conj(v);
    }
  }
}

Eigen::MatrixXcd ConjugacyProblem::normal_states(const Eigen::VectorXd& params) const {
  Eigen::MatrixXcd Hstar, Ncoef;
  unpack(params, Hstar, Ncoef);
  return zeta_ + Hstar * mono_zeta_;
}

Eigen::VectorXcd ConjugacyProblem::residual(const Eigen::VectorXd& params) const {
  Eigen::MatrixXcd Hstar, Ncoef;
  unpack(params, Hstar, Ncoef);
  const Eigen::MatrixXcd z = zeta_ + Hstar * mono_zeta_;
  const Eigen::MatrixXcd mz = structure_.basis.eval_batch<Cplx>(z);
  Eigen::MatrixXcd F = zeta_dot_ + Hstar * mono_dot_ -
                       linear_.Lambda.asDiagonal() * z - Ncoef * mz;
  return Eigen::Map<Eigen::VectorXcd>(F.data(), F.size());
}

Eigen::MatrixXcd ConjugacyProblem::jacobian(const Eigen::VectorXd& params) const {
  Eigen::MatrixXcd Hstar, Ncoef;
  unpack(params, Hstar, Ncoef);
  const int d = linear_.dim();
  const Eigen::Index P = zeta_.cols();
  const Eigen::MatrixXcd z = zeta_ + Hstar * mono_zeta_;
  const Eigen::MatrixXcd mz = structure_.basis.eval_batch<Cplx>(z);

  // Chain-rule factor through z for every point: G_j = Ncoef * Dm(z_j) (d x d).
  std::vector<Eigen::MatrixXcd> G(static_cast<size_t>(P));
  for (Eigen::Index j = 0; j < P; ++j)
    G[static_cast<size_t>(j)] = Ncoef * structure_.basis.jacobian<Cplx>(z.col(j));

  Eigen::MatrixXcd J(static_cast<Eigen::Index>(d) * P, num_params());
  Eigen::VectorXcd half_a(d), half_b(d);
  for (size_t q = 0; q < free_entries_.size(); ++q) {
    const auto& e = free_entries_[q];
    for (Eigen::Index j = 0; j < P; ++j) {
      if (e.in_normal_form) {
        half_a.setZero();
        half_b.setZero();
        half_a[e.row] = -mz(e.col, j);
        half_b[e.row2] = -mz(e.col2, j);
      } else {
        // Contribution of the primary entry: direct terms plus the chain
        // through z in -Ncoef m(z); the conjugate entry contributes the same
        // expression at (row2, col2).
        half_a = -G[static_cast<size_t>(j)].col(e.row) * mono_zeta_(e.col, j);
        half_a[e.row] += mono_dot_(e.col, j) - linear_.Lambda[e.row] * mono_zeta_(e.col, j);
        half_b = -G[static_cast<size_t>(j)].col(e.row2) * mono_zeta_(e.col2, j);
        half_b[e.row2] +=
            mono_dot_(e.col2, j) - linear_.Lambda[e.row2] * mono_zeta_(e.col2, j);
      }
      J.block(j * d, 2 * static_cast<Eigen::Index>(q), d, 1) = half_a + half_b;
      J.block(j * d, 2 * static_cast<Eigen::Index>(q) + 1, d, 1) =
          Cplx(0, 1) * (half_a - half_b);
    }
  }
  return J;
}

double ConjugacyProblem::objective(const Eigen::VectorXd& params) const {
  return residual(params).squaredNorm();
}

Eigen::VectorXd ConjugacyProblem::gradient(const Eigen::VectorXd& params) const {
  const Eigen::VectorXcd f = residual(params);
  const Eigen::MatrixXcd J = jacobian(params);
  return 2.0 * (J.adjoint() * f).real();
}

}  // namespace detail

// --- Levenberg-Marquardt driver ----------------------------------------------

namespace {

struct LmOutcome {
  Eigen::VectorXd params;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton with Marquardt diagonal scaling on a real-parameter
// problem with complex residuals: JtJ = Re(J^H J), Jtf = Re(J^H f).
template <class Problem>
LmOutcome run_levenberg_marquardt(const Problem& problem, Eigen::VectorXd params,
                                  int max_iterations, double tolerance) {
  LmOutcome out;
  double obj = problem.objective(params);
  double mu = 1e-3;
  const double floor_obj = 1e-300;

  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::VectorXcd f = problem.residual(params);
    const Eigen::MatrixXcd J = problem.jacobian(params);
    const Eigen::MatrixXd JtJ = (J.adjoint() * J).real();
    const Eigen::VectorXd Jtf = (J.adjoint() * f).real();

    if (Jtf.cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, std::sqrt(obj))) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd diag = JtJ.diagonal();
    const double diag_floor = std::max(1e-12 * diag.maxCoeff(), 1e-300);
    diag = diag.cwiseMax(diag_floor);

    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += mu * diag;
      const Eigen::VectorXd step = A.ldlt().solve(-Jtf);
      const Eigen::VectorXd trial = params + step;
      const double trial_obj = problem.objective(trial);
      if (trial_obj < obj) {
        const double rel_drop = (obj - trial_obj) / std::max(obj, floor_obj);
        params = trial;
        obj = trial_obj;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        if (rel_drop < tolerance) out.converged = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) {
      out.converged = true;  // no downhill step exists at working precision
      break;
    }
    if (out.converged) break;
  }
  out.params = params;
  out.objective = obj;
  return out;
}

}  // namespace

// --- fitting -------------------------------------------------------------------

namespace {

std::vector<double> per_mode_rho_max(const Eigen::MatrixXcd& z) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r + 1 < z.rows(); r += 2)
    out.push_back(z.row(r).cwiseAbs().maxCoeff());
  return out;
}

// H is regressed so that h(z) reproduces eta: H m(z) ~ B^{-1} eta - z,
// restricted to the non-resonant entries and mirrored to conjugate rows.
Eigen::MatrixXcd regress_transform(const Eigen::MatrixXcd& z, const Eigen::MatrixXcd& zeta,
                                   const ResonanceStructure& structure,
                                   const std::vector<int>& partner,
                                   const std::vector<int>& conj_col) {
  const int d = static_cast<int>(z.rows());
  const int count = structure.basis.count();
  const Eigen::MatrixXcd mz = structure.basis.eval_batch<Cplx>(z);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(d, count);

  for (int r = 0; r < d; r += 2) {
    std::vector<int> free_cols;
    for (int c = 0; c < count; ++c)
      if (!structure.resonant(r, c)) free_cols.push_back(c);
    if (free_cols.empty()) continue;

    Eigen::MatrixXcd A(z.cols(), static_cast<Eigen::Index>(free_cols.size()));
    for (size_t c = 0; c < free_cols.size(); ++c)
      A.col(static_cast<Eigen::Index>(c)) = mz.row(free_cols[c]).transpose();
    const Eigen::VectorXcd target = (zeta.row(r) - z.row(r)).transpose();
    const Eigen::MatrixXcd gram = A.adjoint() * A;
    const Eigen::VectorXcd sol = gram.ldlt().solve(A.adjoint() * target);

    const int r2 = partner[static_cast<size_t>(r)];
    for (size_t c = 0; c < free_cols.size(); ++c) {
      H(r, free_cols[c]) = sol[static_cast<Eigen::Index>(c)];
      H(r2, conj_col[static_cast<size_t>(free_cols[c])]) =
          std::conj(sol[static_cast<Eigen::Index>(c)]);
    }
  }
  return H;
}

}  // namespace

ReducedModel fit_normal_form(const Eigen::MatrixXd& states, const Eigen::MatrixXd& derivatives,
                             const LinearPart& linear, const ResonanceStructure& structure,
                             const NormalFormOptions& opts) {
  detail::ConjugacyProblem problem(states, derivatives, linear, structure);

  Eigen::VectorXd params = Eigen::VectorXd::Zero(problem.num_params());
  if (opts.initial) params = problem.pack(opts.initial->first, opts.initial->second);

  const LmOutcome lm =
      run_levenberg_marquardt(problem, params, opts.max_iterations, opts.tolerance);

  ReducedModel model{linear, structure, {}, {}, {}, lm.objective, lm.iterations,
                     lm.converged, false, {}};
  problem.unpack(lm.params, model.Hstar, model.Ncoef);
  const Eigen::MatrixXcd z = problem.normal_states(lm.params);
  model.training_rho_max = per_mode_rho_max(z);
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(linear.B);
  const Eigen::MatrixXcd zeta = lu.solve(states.cast<Cplx>());
  model.H = regress_transform(z, zeta, structure, linear.partner,
                              structure.basis.conjugate_permutation());
  model.marginal_linear_part = linear.Lambda.real().cwiseAbs().minCoeff() <
                               1e-10 * std::max(1.0, linear.Lambda.cwiseAbs().maxCoeff());

  if (!lm.converged && opts.throw_on_max_iterations)
    throw NormalFormConvergenceError(
        "fit_normal_form: no convergence after " + std::to_string(lm.iterations) +
            " iterations, residual " + std::to_string(lm.objective),
        lm.objective, std::make_shared<ReducedModel>(model));
  return model;
}

// --- one-step-map fallback ----------------------------------------------------

namespace {

// Residual z_{k+1} - flow(z_k) over every consecutive pair in each trajectory,
// with the flow advanced by internal RK4 substeps. The Jacobian is numeric;
// the parameter count is small.
class MapConjugacyProblem {
public:
  MapConjugacyProblem(const std::vector<Eigen::MatrixXd>& trajectories, double dt,
                      const LinearPart& linear, const ResonanceStructure& structure)
      : linear_(linear), structure_(structure), dt_(dt) {
    Eigen::Index total = 0;
    for (const auto& traj : trajectories) {
      if (traj.rows() != linear.dim())
        throw ArgumentError("fit_normal_form_map: trajectory dimension mismatch");
      if (traj.cols() < 2)
        throw ArgumentError("fit_normal_form_map: trajectories need at least 2 samples");
      total += traj.cols();
    }
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(linear.B);
    zeta_.resize(linear.dim(), total);
    Eigen::Index at = 0;
    for (const auto& traj : trajectories) {
      zeta_.middleCols(at, traj.cols()) = lu.solve(traj.cast<Cplx>());
      starts_.push_back(at);
      lengths_.push_back(traj.cols());
      at += traj.cols();
    }
    mono_zeta_ = structure.basis.eval_batch<Cplx>(zeta_);
    conj_col_ = structure.basis.conjugate_permutation();
    for (int r = 0; r < linear.dim(); r += 2)
      for (int c = 0; c < structure.basis.count(); ++c)
        free_entries_.push_back({r, c, linear.partner[static_cast<size_t>(r)],
                                 conj_col_[static_cast<size_t>(c)],
                                 structure.resonant(r, c)});
    const double fastest = linear.Lambda.cwiseAbs().maxCoeff();
    substeps_ = std::max(1, static_cast<int>(std::ceil(fastest * dt / 0.2)));
    pairs_ = total - static_cast<Eigen::Index>(trajectories.size());
  }

  int num_params() const { return 2 * static_cast<int>(free_entries_.size()); }

  void unpack(const Eigen::VectorXd& params, Eigen::MatrixXcd& Hstar,
              Eigen::MatrixXcd& Ncoef) const {
    const int d = linear_.dim();
    Hstar = Eigen::MatrixXcd::Zero(d, structure_.basis.count());
    Ncoef = Eigen::MatrixXcd::Zero(d, structure_.basis.count());
    for (size_t q = 0; q < free_entries_.size(); ++q) {
      const auto& e = free_entries_[q];
      const Cplx v(params[2 * static_cast<Eigen::Index>(q)],
                   params[2 * static_cast<Eigen::Index>(q) + 1]);
      if (e.in_normal_form) {
        Ncoef(e.row, e.col) = v;
        Ncoef(e.row2, e.col2) = std::conj(v);
      } else {
        Hstar(e.row, e.col) = v;
        Hstar(e.row2, e.col2) = std::conj(v);
      }
    }
  }

  Eigen::MatrixXcd normal_states(const Eigen::VectorXd& params) const {
    Eigen::MatrixXcd Hstar, Ncoef;
    unpack(params, Hstar, Ncoef);
    return zeta_ + Hstar * mono_zeta_;
  }

  Eigen::VectorXcd residual(const Eigen::VectorXd& params) const {
    Eigen::MatrixXcd Hstar, Ncoef;
    unpack(params, Hstar, Ncoef);
    const Eigen::MatrixXcd z = zeta_ + Hstar * mono_zeta_;
    Eigen::VectorXcd out(pairs_ * linear_.dim());
    Eigen::Index at = 0;
    const double h = dt_ / substeps_;
    for (size_t t = 0; t < starts_.size(); ++t) {
      for (Eigen::Index j = 0; j + 1 < lengths_[t]; ++j) {
        Eigen::VectorXcd cur = z.col(starts_[t] + j);
        for (int s = 0; s < substeps_; ++s) cur = rk4_step(cur, Ncoef, h);
        out.segment(at, linear_.dim()) = z.col(starts_[t] + j + 1) - cur;
        at += linear_.dim();
      }
    }
    return out;
  }

  Eigen::MatrixXcd jacobian(const Eigen::VectorXd& params) const {
    // Central differences; adequate for the small mask-limited parameter set.
    const double step = 1e-6;
    Eigen::MatrixXcd J(pairs_ * linear_.dim(), num_params());
    Eigen::VectorXd p = params;
    for (int q = 0; q < num_params(); ++q) {
      const double save = p[q];
      p[q] = save + step;
      const Eigen::VectorXcd fp = residual(p);
      p[q] = save - step;
      const Eigen::VectorXcd fm = residual(p);
      p[q] = save;
      J.col(q) = (fp - fm) / (2.0 * step);
    }
    return J;
  }

  double objective(const Eigen::VectorXd& params) const { return residual(params).squaredNorm(); }

private:
  Eigen::VectorXcd rhs(const Eigen::VectorXcd& z, const Eigen::MatrixXcd& Ncoef) const {
    return linear_.Lambda.cwiseProduct(z) + Ncoef * structure_.basis.eval<Cplx>(z);
  }
  Eigen::VectorXcd rk4_step(const Eigen::VectorXcd& z, const Eigen::MatrixXcd& Ncoef,
                            double h) const {
    const Eigen::VectorXcd k1 = rhs(z, Ncoef);
    const Eigen::VectorXcd k2 = rhs(z + 0.5 * h * k1, Ncoef);
    const Eigen::VectorXcd k3 = rhs(z + 0.5 * h * k2, Ncoef);
    const Eigen::VectorXcd k4 = rhs(z + h * k3, Ncoef);
    return z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  struct FreeEntry {
    int row, col, row2, col2;
    bool in_normal_form;
  };

  const LinearPart& linear_;
  const ResonanceStructure& structure_;
  double dt_;
  int substeps_ = 1;
  Eigen::Index pairs_ = 0;
  Eigen::MatrixXcd zeta_;
  Eigen::MatrixXcd mono_zeta_;
  std::vector<Eigen::Index> starts_;
  std::vector<Eigen::Index> lengths_;
  std::vector<int> conj_col_;
  std::vector<FreeEntry> free_entries_;
};

}  // namespace

ReducedModel fit_normal_form_map(const std::vector<Eigen::MatrixXd>& trajectories, double dt,
                                 const LinearPart& linear, const ResonanceStructure& structure,
                                 NormalFormOptions opts) {
  if (dt <= 0.0) throw ArgumentError("fit_normal_form_map: dt must be positive");
  if (!linear.all_oscillatory())
    throw ArgumentError("fit_normal_form_map: linear part must consist of oscillatory "
                        "conjugate pairs");
  MapConjugacyProblem problem(trajectories, dt, linear, structure);
  Eigen::VectorXd params = Eigen::VectorXd::Zero(problem.num_params());

  const LmOutcome lm =
      run_levenberg_marquardt(problem, params, opts.max_iterations, opts.tolerance);

  ReducedModel model{linear, structure, {}, {}, {}, lm.objective, lm.iterations,
                     lm.converged, false, {}};
  problem.unpack(lm.params, model.Hstar, model.Ncoef);
  const Eigen::MatrixXcd z = problem.normal_states(lm.params);
  model.training_rho_max = per_mode_rho_max(z);

  Eigen::Index total = 0;
  for (const auto& traj : trajectories) total += traj.cols();
  Eigen::MatrixXd states(linear.dim(), total);
  Eigen::Index at = 0;
  for (const auto& traj : trajectories) {
    states.middleCols(at, traj.cols()) = traj;
    at += traj.cols();
  }
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(linear.B);
  model.H = regress_transform(z, lu.solve(states.cast<Cplx>()), structure, linear.partner,
                              structure.basis.conjugate_permutation());
  model.marginal_linear_part = linear.Lambda.real().cwiseAbs().minCoeff() <
                               1e-10 * std::max(1.0, linear.Lambda.cwiseAbs().maxCoeff());

  if (!lm.converged && opts.throw_on_max_iterations)
    throw NormalFormConvergenceError(
        "fit_normal_form_map: no convergence after " + std::to_string(lm.iterations) +
            " iterations, residual " + std::to_string(lm.objective),
        lm.objective, std::make_shared<ReducedModel>(model));
  return model;
}

// --- evaluation ----------------------------------------------------------------

Eigen::VectorXcd to_normal_coordinates(const ReducedModel& model, const Eigen::VectorXd& eta) {
  if (eta.size() != model.dim())
    throw ArgumentError("to_normal_coordinates: dimension mismatch");
  const Eigen::VectorXcd zeta = model.linear.B.partialPivLu().solve(eta.cast<Cplx>());
  return zeta + model.Hstar * model.basis().eval<Cplx>(zeta);
}

Eigen::MatrixXcd to_normal_coordinates(const ReducedModel& model, const Eigen::MatrixXd& etas) {
  if (etas.rows() != model.dim())
    throw ArgumentError("to_normal_coordinates: dimension mismatch");
  const Eigen::MatrixXcd zeta = model.linear.B.partialPivLu().solve(etas.cast<Cplx>());
  return zeta + model.Hstar * model.basis().eval_batch<Cplx>(zeta);
}

Eigen::VectorXcd to_reduced_coordinates(const ReducedModel& model, const Eigen::VectorXcd& z) {
  if (z.size() != model.dim())
    throw ArgumentError("to_reduced_coordinates: dimension mismatch");
  return model.linear.B * (z + model.H * model.basis().eval<Cplx>(z));
}

Eigen::MatrixXcd to_reduced_coordinates(const ReducedModel& model, const Eigen::MatrixXcd& zs) {
  if (zs.rows() != model.dim())
    throw ArgumentError("to_reduced_coordinates: dimension mismatch");
  return model.linear.B * (zs + model.H * model.basis().eval_batch<Cplx>(zs));
}

Eigen::VectorXcd normal_form_rhs(const ReducedModel& model, const Eigen::VectorXcd& z) {
  return model.linear.Lambda.cwiseProduct(z) + model.Ncoef * model.basis().eval<Cplx>(z);
}

Eigen::MatrixXcd integrate_normal_form(const ReducedModel& model, const Eigen::VectorXcd& z0,
                                       Eigen::Index steps, double dt) {
  Eigen::MatrixXcd out(z0.size(), steps + 1);
  out.col(0) = z0;
  Eigen::VectorXcd z = z0;
  for (Eigen::Index i = 0; i < steps; ++i) {
    const Eigen::VectorXcd k1 = normal_form_rhs(model, z);
    const Eigen::VectorXcd k2 = normal_form_rhs(model, z + 0.5 * dt * k1);
    const Eigen::VectorXcd k3 = normal_form_rhs(model, z + 0.5 * dt * k2);
    const Eigen::VectorXcd k4 = normal_form_rhs(model, z + dt * k3);
    z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.col(i + 1) = z;
  }
  return out;
}

double conjugacy_error(const ReducedModel& model, const Eigen::MatrixXd& states,
                       const Eigen::MatrixXd& derivatives) {
  detail::ConjugacyProblem problem(states, derivatives, model.linear, model.structure);
  return problem.objective(problem.pack(model.Hstar, model.Ncoef));
}

// --- polar form -----------------------------------------------------------------

PolarModel polar_from_normal_form(const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& coeffs,
                                  const MonomialBasis& basis, double coeff_tol) {
  const int d = static_cast<int>(lambda.size());
  if (d % 2 != 0 || coeffs.rows() != d || coeffs.cols() != basis.count() ||
      basis.dims() != d)
    throw ArgumentError("polar_from_normal_form: inconsistent shapes");

  const double tol = coeff_tol > 0.0
                         ? coeff_tol
                         : 1e-9 * std::max(coeffs.cwiseAbs().maxCoeff(), 1e-300);
  const int m = d / 2;
  const int max_power = (basis.max_order() - 1) / 2;

  PolarModel polar;
  polar.modes.resize(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    auto& mode = polar.modes[static_cast<size_t>(j)];
    mode.alpha.assign(static_cast<size_t>(max_power) + 1, 0.0);
    mode.omega.assign(static_cast<size_t>(max_power) + 1, 0.0);
    mode.alpha[0] = lambda[2 * j].real();
    mode.omega[0] = std::abs(lambda[2 * j].imag());

    for (int c = 0; c < basis.count(); ++c) {
      const Cplx v = coeffs(2 * j, c);
      if (std::abs(v) <= tol) continue;
      bool own_mode = basis.exponents()(2 * j, c) == basis.exponents()(2 * j + 1, c) + 1;
      for (int s = 0; s < d && own_mode; ++s)
        if (s != 2 * j && s != 2 * j + 1 && basis.exponents()(s, c) != 0) own_mode = false;
      if (!own_mode)
        throw UnsupportedStructureError(
            "polar conversion: normal form carries a cross-mode or non-phase-invariant "
            "resonant term (mode " + std::to_string(j + 1) + ", monomial column " +
            std::to_string(c) + "); only product-of-oscillators structure is supported");
      const int power = basis.exponents()(2 * j + 1, c);
      mode.alpha[static_cast<size_t>(power)] += v.real();
      mode.omega[static_cast<size_t>(power)] += v.imag();
    }
  }
  return polar;
}

PolarModel to_polar(const ReducedModel& model) {
  if (!model.linear.all_oscillatory())
    throw UnsupportedStructureError("to_polar: model has non-oscillatory modes");
  PolarModel polar = polar_from_normal_form(model.linear.Lambda, model.Ncoef, model.basis());
  for (size_t j = 0; j < polar.modes.size() && j < model.training_rho_max.size(); ++j)
    polar.modes[j].rho_max = model.training_rho_max[j];
  return polar;
}

}  // namespace ssmrom
