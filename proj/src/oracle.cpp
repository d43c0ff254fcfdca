#include "ssmrom/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ssmrom/normal_form.hpp"

namespace ssmrom {

using Cplx = std::complex<double>;

// --- modal systems ---------------------------------------------------------

void ModalSystem::validate() const {
  if (n < 1 || Lambda.size() != n || T.rows() != n || T.cols() != n ||
      static_cast<int>(partner.size()) != n)
    throw ArgumentError("ModalSystem: inconsistent sizes");
  for (int i = 0; i < n; ++i) {
    const int p = partner[static_cast<size_t>(i)];
    if (p < 0 || p >= n || partner[static_cast<size_t>(p)] != i)
      throw ArgumentError("ModalSystem: partner map is not an involution");
    if (std::abs(Lambda[p] - std::conj(Lambda[i])) > 1e-12 * (1.0 + std::abs(Lambda[i])))
      throw ArgumentError("ModalSystem: eigenvalues do not close under conjugation");
    if ((T.col(p) - T.col(i).conjugate()).cwiseAbs().maxCoeff() >
        1e-12 * (1.0 + T.cwiseAbs().maxCoeff()))
      throw ArgumentError("ModalSystem: eigenvector columns do not close under conjugation");
  }
  for (size_t o = 0; o < G.size(); ++o) {
    const int order = static_cast<int>(o) + 2;
    MonomialBasis basis(n, order, order);
    if (G[o].rows() != n || G[o].cols() != basis.count())
      throw ArgumentError("ModalSystem: coefficient matrix shape mismatch at order " +
                          std::to_string(order));
    const auto conj_col = basis.conjugate_permutation(partner);
    for (int r = 0; r < n; ++r) {
      const int pr = partner[static_cast<size_t>(r)];
      for (int c = 0; c < basis.count(); ++c) {
        const Cplx mirrored = std::conj(G[o](r, c));
        if (std::abs(G[o](pr, conj_col[static_cast<size_t>(c)]) - mirrored) >
            1e-12 * (1.0 + G[o].cwiseAbs().maxCoeff()))
          throw ArgumentError("ModalSystem: coefficients do not close under conjugation "
                              "(order " + std::to_string(order) + ")");
      }
    }
  }
}

Eigen::VectorXcd ModalSystem::g0(const Eigen::VectorXcd& q) const {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  for (size_t o = 0; o < G.size(); ++o) {
    const int order = static_cast<int>(o) + 2;
    MonomialBasis basis(n, order, order);
    out += G[o] * basis.eval<Cplx>(q);
  }
  return out;
}

VectorField ModalSystem::realified() const {
  validate();
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(T);
  const ModalSystem self = *this;
  VectorField field;
  field.dimension = n;
  field.name = "modal_system";
  field.rhs = [self, lu](const Eigen::VectorXd& x, double) {
    const Eigen::VectorXcd q = lu.solve(x.cast<Cplx>());
    const Eigen::VectorXcd dq = self.Lambda.cwiseProduct(q) + self.g0(q);
    return Eigen::VectorXd((self.T * dq).real());
  };
  for (int i = 0; i < n; ++i) field.eigenvalues.push_back(Lambda[i]);
  return field;
}

ModalSystemBuilder::ModalSystemBuilder(const std::vector<std::complex<double>>& modes) {
  if (modes.empty()) throw ArgumentError("ModalSystemBuilder: no modes");
  std::vector<Cplx> expanded;
  for (const Cplx lam : modes) {
    if (lam.imag() < 0.0)
      throw ArgumentError("ModalSystemBuilder: specify each pair by its Im >= 0 member");
    if (lam.imag() > 0.0) {
      partner_.push_back(static_cast<int>(expanded.size()) + 1);
      partner_.push_back(static_cast<int>(expanded.size()));
      expanded.push_back(lam);
      expanded.push_back(std::conj(lam));
    } else {
      partner_.push_back(static_cast<int>(expanded.size()));
      expanded.push_back(lam);
    }
  }
  lambda_ = Eigen::Map<Eigen::VectorXcd>(expanded.data(), static_cast<Eigen::Index>(expanded.size()));
}

ModalSystemBuilder& ModalSystemBuilder::coupling(int row, const Eigen::VectorXi& exponents,
                                                 std::complex<double> c) {
  const int n = static_cast<int>(lambda_.size());
  if (row < 0 || row >= n) throw ArgumentError("ModalSystemBuilder: row out of range");
  if (exponents.size() != n) throw ArgumentError("ModalSystemBuilder: exponent length mismatch");
  const int order = exponents.sum();
  if (order < 2) throw ArgumentError("ModalSystemBuilder: couplings must have order >= 2");
  terms_.push_back({row, exponents, c});
  max_order_ = std::max(max_order_, order);
  return *this;
}

ModalSystem ModalSystemBuilder::build() const {
  const int n = static_cast<int>(lambda_.size());
  ModalSystem sys;
  sys.n = n;
  sys.Lambda = lambda_;
  sys.partner = partner_;

  sys.T = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (partner_[static_cast<size_t>(i)] == i) {
      sys.T(i, i) = 1.0;
    } else if (partner_[static_cast<size_t>(i)] == i + 1) {
      // x_i = Re q_i, x_{i+1} = Im q_i
      sys.T(i, i) = 0.5;
      sys.T(i, i + 1) = 0.5;
      sys.T(i + 1, i) = Cplx(0.0, -0.5);
      sys.T(i + 1, i + 1) = Cplx(0.0, 0.5);
    }
  }

  for (int order = 2; order <= std::max(max_order_, 2); ++order) {
    MonomialBasis basis(n, order, order);
    sys.G.push_back(Eigen::MatrixXcd::Zero(n, basis.count()));
  }
  for (const auto& term : terms_) {
    const int order = term.exponents.sum();
    MonomialBasis basis(n, order, order);
    const int col = basis.find(term.exponents);
    auto& mat = sys.G[static_cast<size_t>(order - 2)];
    mat(term.row, col) += term.coeff;
    // Conjugate mirror.
    Eigen::VectorXi swapped(n);
    for (int i = 0; i < n; ++i) swapped[partner_[static_cast<size_t>(i)]] = term.exponents[i];
    const int ccol = basis.find(swapped);
    const int crow = partner_[static_cast<size_t>(term.row)];
    if (crow != term.row || ccol != col || term.coeff.imag() != 0.0)
      mat(crow, ccol) += std::conj(term.coeff);
  }
  sys.validate();
  return sys;
}

// --- truncated polynomial helpers -------------------------------------------

namespace {

// Coefficients over per-order bases 1..M in the reduced variables.
struct TruncPoly {
  std::vector<Eigen::RowVectorXcd> ord;  // ord[j-1] over basis of order j
};

TruncPoly tp_zero(const std::vector<MonomialBasis>& bases) {
  TruncPoly out;
  for (const auto& b : bases) out.ord.push_back(Eigen::RowVectorXcd::Zero(b.count()));
  return out;
}

TruncPoly tp_mul(const TruncPoly& a, const TruncPoly& b,
                 const std::vector<MonomialBasis>& bases) {
  const int M = static_cast<int>(bases.size());
  TruncPoly out = tp_zero(bases);
  for (int ja = 1; ja <= M; ++ja) {
    const auto& ca = a.ord[static_cast<size_t>(ja - 1)];
    if (ca.isZero(0.0)) continue;
    for (int jb = 1; ja + jb <= M; ++jb) {
      const auto& cb = b.ord[static_cast<size_t>(jb - 1)];
      if (cb.isZero(0.0)) continue;
      const auto& basis_a = bases[static_cast<size_t>(ja - 1)];
      const auto& basis_b = bases[static_cast<size_t>(jb - 1)];
      const auto& basis_o = bases[static_cast<size_t>(ja + jb - 1)];
      auto& co = out.ord[static_cast<size_t>(ja + jb - 1)];
      for (int ta = 0; ta < basis_a.count(); ++ta) {
        if (ca[ta] == Cplx(0.0)) continue;
        for (int tb = 0; tb < basis_b.count(); ++tb) {
          if (cb[tb] == Cplx(0.0)) continue;
          const Eigen::VectorXi expo = basis_a.exponents().col(ta) + basis_b.exponents().col(tb);
          co[basis_o.find(expo)] += ca[ta] * cb[tb];
        }
      }
    }
  }
  return out;
}

// Coefficients of the order-k block of g0 composed with the truncated
// parametrization (one TruncPoly per modal coordinate).
Eigen::MatrixXcd compose_g0_order(const ModalSystem& system,
                                  const std::vector<TruncPoly>& w,
                                  const std::vector<MonomialBasis>& bases, int k) {
  const auto& basis_k = bases[static_cast<size_t>(k - 1)];
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(system.n, basis_k.count());
  for (size_t o = 0; o < system.G.size(); ++o) {
    const int order = static_cast<int>(o) + 2;
    if (order > k) break;  // every factor has order >= 1
    MonomialBasis gbasis(system.n, order, order);
    for (int t = 0; t < gbasis.count(); ++t) {
      if (system.G[o].col(t).isZero(0.0)) continue;
      // Product of the parametrization components to this column's powers.
      TruncPoly prod;
      bool first = true;
      for (int i = 0; i < system.n; ++i) {
        for (int e = 0; e < gbasis.exponents()(i, t); ++e) {
          if (first) {
            prod = w[static_cast<size_t>(i)];
            first = false;
          } else {
            prod = tp_mul(prod, w[static_cast<size_t>(i)], bases);
          }
        }
      }
      const auto& pk = prod.ord[static_cast<size_t>(k - 1)];
      if (pk.isZero(0.0)) continue;
      out += system.G[o].col(t) * pk;
    }
  }
  return out;
}

// Coefficients over the order (ja - 1 + jb) basis of (D z^(ja)) * (C z^(jb)),
// where C has one row per reduced variable.
Eigen::MatrixXcd dz_inner(const MonomialBasis& basis_a, const Eigen::MatrixXcd& C,
                          const MonomialBasis& basis_b, const MonomialBasis& basis_out) {
  const int dims = basis_a.dims();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(basis_a.count(), basis_out.count());
  for (int t = 0; t < basis_a.count(); ++t) {
    for (int s = 0; s < dims; ++s) {
      const int e = basis_a.exponents()(s, t);
      if (e == 0) continue;
      Eigen::VectorXi shifted = basis_a.exponents().col(t);
      shifted[s] -= 1;
      for (int u = 0; u < basis_b.count(); ++u) {
        if (C(s, u) == Cplx(0.0)) continue;
        const Eigen::VectorXi expo = shifted + basis_b.exponents().col(u);
        out(t, basis_out.find(expo)) += static_cast<double>(e) * C(s, u);
      }
    }
  }
  return out;
}

std::vector<MonomialBasis> reduced_bases(int dims, int M) {
  std::vector<MonomialBasis> bases;
  for (int j = 1; j <= M; ++j) bases.emplace_back(dims, j, j);
  return bases;
}

}  // namespace

// --- autonomous recursion ------------------------------------------------------

OracleModel solve_autonomous_ssm(const ModalSystem& system, int m, int M, double delta) {
  system.validate();
  if (m < 1 || 2 * m > system.n)
    throw ArgumentError("solve_autonomous_ssm: need 1 <= 2m <= n");
  if (M < 1) throw ArgumentError("solve_autonomous_ssm: M must be >= 1");
  for (int j = 0; j < m; ++j)
    if (system.partner[static_cast<size_t>(2 * j)] != 2 * j + 1)
      throw ArgumentError("solve_autonomous_ssm: the first 2m coordinates must form "
                          "oscillatory conjugate pairs");

  const int n = system.n;
  const int dims = 2 * m;
  const Eigen::VectorXcd lambda_m = system.Lambda.head(dims);
  const auto bases = reduced_bases(dims, M);

  OracleModel model;
  model.n = n;
  model.m = m;
  model.M = M;
  model.W.push_back(Eigen::MatrixXcd::Zero(n, dims));
  model.W[0].topRows(dims).setIdentity();
  model.N.push_back(Eigen::MatrixXcd(lambda_m.asDiagonal()));

  // Running parametrization, one truncated polynomial per modal coordinate.
  std::vector<TruncPoly> w(static_cast<size_t>(n), tp_zero(bases));
  for (int i = 0; i < dims; ++i) w[static_cast<size_t>(i)].ord[0][i] = 1.0;

  for (int k = 2; k <= M; ++k) {
    const auto& basis_k = bases[static_cast<size_t>(k - 1)];
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(n, basis_k.count());
    for (int j = 2; j <= k - 1; ++j) {
      const int j2 = k + 1 - j;
      if (j2 < 2 || j2 > M) continue;
      B += model.W[static_cast<size_t>(j - 1)] *
           dz_inner(bases[static_cast<size_t>(j - 1)], model.N[static_cast<size_t>(j2 - 1)],
                    bases[static_cast<size_t>(j2 - 1)], basis_k);
    }
    B -= compose_g0_order(system, w, bases, k);

    Eigen::MatrixXcd Wk = Eigen::MatrixXcd::Zero(n, basis_k.count());
    Eigen::MatrixXcd Nk = Eigen::MatrixXcd::Zero(dims, basis_k.count());
    for (int s = 0; s < basis_k.count(); ++s) {
      Cplx lam_mono(0.0, 0.0);
      for (int l = 0; l < dims; ++l)
        lam_mono += lambda_m[l] * static_cast<double>(basis_k.exponents()(l, s));
      for (int r = 0; r < n; ++r) {
        const Cplx denom = system.Lambda[r] - lam_mono;
        if (r < dims) {
          double gap = system.Lambda[r].imag();
          for (int l = 0; l < dims; ++l)
            gap -= lambda_m[l].imag() * static_cast<double>(basis_k.exponents()(l, s));
          if (std::abs(gap) <= delta) {
            Nk(r, s) = -B(r, s);
          } else {
            Wk(r, s) = B(r, s) / denom;
          }
        } else {
          const double scale = std::max({std::abs(system.Lambda[r]), std::abs(lam_mono), 1.0});
          if (std::abs(denom) <= 1e-12 * scale)
            throw ResonanceError("solve_autonomous_ssm: exact outer resonance at row " +
                                 std::to_string(r) + ", monomial " + std::to_string(s) +
                                 ", order " + std::to_string(k));
          Wk(r, s) = B(r, s) / denom;
        }
      }
    }
    model.W.push_back(Wk);
    model.N.push_back(Nk);
    for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)].ord[static_cast<size_t>(k - 1)] = Wk.row(i);
  }
  return model;
}

OracleModel solve_nonautonomous_leading(OracleModel model, const ModalSystem& system,
                                        const std::vector<ModalForcing>& forcing,
                                        const Eigen::VectorXd& Omega, double delta) {
  system.validate();
  const int n = system.n;
  const int dims = 2 * model.m;
  model.Omega = Omega;
  model.harmonics.clear();

  for (const auto& h : forcing) {
    if (h.k.size() != Omega.size())
      throw ArgumentError("solve_nonautonomous_leading: harmonic index length mismatch");
    if (h.g_plus.size() != n || h.g_minus.size() != n)
      throw ArgumentError("solve_nonautonomous_leading: forcing vector size mismatch");
    const double dot = h.k.cast<double>().dot(Omega);

    OracleModel::Harmonic out;
    out.k = h.k;
    out.n_plus = Eigen::VectorXcd::Zero(dims);
    out.n_minus = Eigen::VectorXcd::Zero(dims);
    out.w_plus = Eigen::VectorXcd::Zero(n);
    out.w_minus = Eigen::VectorXcd::Zero(n);

    for (int j = 0; j < model.m; ++j) {
      const double omega_j = system.Lambda[2 * j].imag();
      if (std::abs(omega_j - dot) <= delta) {  // k in K+
        out.n_plus[2 * j] = h.g_plus[2 * j];
        out.n_minus[2 * j + 1] = h.g_minus[2 * j + 1];
      } else if (std::abs(omega_j + dot) <= delta) {  // k in K-
        out.n_minus[2 * j] = h.g_minus[2 * j];
        out.n_plus[2 * j + 1] = h.g_plus[2 * j + 1];
      }
    }

    for (int r = 0; r < n; ++r) {
      const Cplx dplus = system.Lambda[r] - Cplx(0.0, dot);
      const Cplx dminus = system.Lambda[r] + Cplx(0.0, dot);
      const double scale = std::max(std::abs(system.Lambda[r]) + std::abs(dot), 1.0);
      const Cplx num_plus = (r < dims ? out.n_plus[r] : Cplx(0.0)) - h.g_plus[r];
      const Cplx num_minus = (r < dims ? out.n_minus[r] : Cplx(0.0)) - h.g_minus[r];
      if (num_plus != Cplx(0.0)) {
        if (std::abs(dplus) <= 1e-12 * scale)
          throw ResonanceError("solve_nonautonomous_leading: exact resonance at row " +
                               std::to_string(r) + " for the +harmonic");
        out.w_plus[r] = num_plus / dplus;
      }
      if (num_minus != Cplx(0.0)) {
        if (std::abs(dminus) <= 1e-12 * scale)
          throw ResonanceError("solve_nonautonomous_leading: exact resonance at row " +
                               std::to_string(r) + " for the -harmonic");
        out.w_minus[r] = num_minus / dminus;
      }
    }
    model.harmonics.push_back(std::move(out));
  }
  return model;
}

// --- evaluation ------------------------------------------------------------------

Eigen::VectorXcd OracleModel::lift(const Eigen::VectorXcd& z) const {
  if (z.size() != 2 * m) throw ArgumentError("OracleModel::lift: dimension mismatch");
  Eigen::VectorXcd q = Eigen::VectorXcd::Zero(n);
  for (int j = 1; j <= M; ++j)
    q += W[static_cast<size_t>(j - 1)] * basis(j).eval<Cplx>(z);
  return q;
}

Eigen::VectorXcd OracleModel::reduced_rhs(const Eigen::VectorXcd& z) const {
  if (z.size() != 2 * m) throw ArgumentError("OracleModel::reduced_rhs: dimension mismatch");
  Eigen::VectorXcd dz = Eigen::VectorXcd::Zero(2 * m);
  for (int j = 1; j <= M; ++j)
    dz += N[static_cast<size_t>(j - 1)] * basis(j).eval<Cplx>(z);
  return dz;
}

std::vector<double> invariance_residual(const ModalSystem& system, const OracleModel& model) {
  const int dims = 2 * model.m;
  const auto bases = reduced_bases(dims, model.M);
  std::vector<TruncPoly> w(static_cast<size_t>(system.n), tp_zero(bases));
  for (int j = 1; j <= model.M; ++j)
    for (int i = 0; i < system.n; ++i)
      w[static_cast<size_t>(i)].ord[static_cast<size_t>(j - 1)] =
          model.W[static_cast<size_t>(j - 1)].row(i);

  std::vector<double> residual;
  for (int k = 1; k <= model.M; ++k) {
    const auto& basis_k = bases[static_cast<size_t>(k - 1)];
    Eigen::MatrixXcd lhs = Eigen::MatrixXcd::Zero(system.n, basis_k.count());
    for (int j = 1; j <= model.M; ++j) {
      const int j2 = k + 1 - j;
      if (j2 < 1 || j2 > model.M) continue;
      lhs += model.W[static_cast<size_t>(j - 1)] *
             dz_inner(bases[static_cast<size_t>(j - 1)], model.N[static_cast<size_t>(j2 - 1)],
                      bases[static_cast<size_t>(j2 - 1)], basis_k);
    }
    Eigen::MatrixXcd rhs = system.Lambda.asDiagonal() * model.W[static_cast<size_t>(k - 1)];
    rhs += compose_g0_order(system, w, bases, k);
    residual.push_back((lhs - rhs).cwiseAbs().maxCoeff());
  }
  return residual;
}

TimeSeries lift_and_sample(const OracleModel& model, const ModalSystem& system,
                           const Eigen::MatrixXcd& z_path, double t0, double dt,
                           double epsilon) {
  if (z_path.rows() != 2 * model.m)
    throw ArgumentError("lift_and_sample: path dimension mismatch");
  TimeSeries out;
  out.t0 = t0;
  out.dt = dt;
  out.values.resize(system.n, z_path.cols());
  for (Eigen::Index c = 0; c < z_path.cols(); ++c) {
    Eigen::VectorXcd q = model.lift(z_path.col(c));
    if (epsilon != 0.0) {
      const double t = t0 + dt * static_cast<double>(c);
      for (const auto& h : model.harmonics) {
        const double phase = h.k.cast<double>().dot(model.Omega) * t;
        const Cplx rot(std::cos(phase), std::sin(phase));
        q += epsilon * (h.w_plus * rot + h.w_minus * std::conj(rot));
      }
    }
    out.values.col(c) = (system.T * q).real();
  }
  return out;
}

PolarModel to_polar(const OracleModel& model) {
  const int dims = 2 * model.m;
  const Eigen::VectorXcd lambda = model.N[0].diagonal();
  if (model.M < 2) {
    Eigen::MatrixXcd empty = Eigen::MatrixXcd::Zero(dims, MonomialBasis(dims, 2, 2).count());
    return polar_from_normal_form(lambda, empty, MonomialBasis(dims, 2, 2));
  }
  MonomialBasis combined(dims, 2, model.M);
  Eigen::MatrixXcd coeffs = Eigen::MatrixXcd::Zero(dims, combined.count());
  for (int j = 2; j <= model.M; ++j) {
    auto [first, last] = combined.order_block(j);
    coeffs.middleCols(first, last - first) = model.N[static_cast<size_t>(j - 1)];
  }
  return polar_from_normal_form(lambda, coeffs, combined);
}

ForcingSpec oracle_forcing_spec(const OracleModel& model, double epsilon) {
  ForcingSpec spec;
  spec.Omega = model.Omega;
  constexpr double half_pi = 1.5707963267948966;
  for (const auto& h : model.harmonics) {
    for (int j = 0; j < model.m; ++j) {
      const Cplx gp = h.n_plus[2 * j];
      if (std::abs(gp) > 0.0)
        spec.harmonics.push_back(
            {j, h.k, epsilon * std::abs(gp), std::arg(gp) - half_pi, +1});
      const Cplx gm = h.n_minus[2 * j];
      if (std::abs(gm) > 0.0)
        spec.harmonics.push_back(
            {j, h.k, epsilon * std::abs(gm), -std::arg(gm) - half_pi, -1});
    }
  }
  return spec;
}

// --- spectral diagnostics ----------------------------------------------------------

SpectralQuotients spectral_quotients(const Eigen::VectorXcd& lambda,
                                     const std::vector<int>& inside) {
  if (inside.empty()) throw ArgumentError("spectral_quotients: empty subspace");
  std::vector<bool> is_inside(static_cast<size_t>(lambda.size()), false);
  for (int i : inside) {
    if (i < 0 || i >= lambda.size()) throw ArgumentError("spectral_quotients: index out of range");
    is_inside[static_cast<size_t>(i)] = true;
  }

  double sign = 0.0;
  double min_inside = 0.0;
  for (int i : inside) {
    const double re = lambda[i].real();
    if (re == 0.0)
      throw ArgumentError("spectral_quotients: zero real part inside the subspace "
                          "(hyperbolicity violated)");
    const double s = re > 0.0 ? 1.0 : -1.0;
    if (sign == 0.0) sign = s;
    if (s != sign)
      throw ArgumentError("spectral_quotients: subspace mixes stable and unstable modes");
    min_inside = min_inside == 0.0 ? std::abs(re) : std::min(min_inside, std::abs(re));
  }

  double max_same_side = 0.0;
  double max_outer = 0.0;
  bool have_outer = false;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double re = lambda[i].real();
    if (re * sign <= 0.0) continue;  // other stability type
    max_same_side = std::max(max_same_side, std::abs(re));
    if (!is_inside[static_cast<size_t>(i)]) {
      max_outer = std::max(max_outer, std::abs(re));
      have_outer = true;
    }
  }

  SpectralQuotients out;
  out.absolute = static_cast<int>(std::floor(max_same_side / min_inside));
  out.outer_empty = !have_outer;
  out.relative = have_outer ? static_cast<int>(std::floor(max_outer / min_inside)) : 0;
  return out;
}

NonresonanceReport check_nonresonance(const Eigen::VectorXcd& lambda,
                                      const std::vector<int>& inside, int order_cap,
                                      double tol) {
  NonresonanceReport report;
  report.order_cap = order_cap;
  if (order_cap < 2) return report;
  if (inside.empty()) throw ArgumentError("check_nonresonance: empty subspace");

  std::vector<bool> is_inside(static_cast<size_t>(lambda.size()), false);
  for (int i : inside) {
    if (i < 0 || i >= lambda.size()) throw ArgumentError("check_nonresonance: index out of range");
    is_inside[static_cast<size_t>(i)] = true;
  }

  const int d = static_cast<int>(inside.size());
  MonomialBasis combos(d, 2, order_cap);
  for (int c = 0; c < combos.count(); ++c) {
    Cplx combo(0.0, 0.0);
    for (int j = 0; j < d; ++j)
      combo += static_cast<double>(combos.exponents()(j, c)) * lambda[inside[static_cast<size_t>(j)]];
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
      if (is_inside[static_cast<size_t>(k)]) continue;  // inner resonances are exempt
      const double real_gap = std::abs(combo.real() - lambda[k].real());
      if (real_gap <= tol)
        report.real_violations.push_back({combos.exponents().col(c), static_cast<int>(k), real_gap});
      const double full_gap = std::abs(combo - lambda[k]);
      if (full_gap <= tol)
        report.complex_violations.push_back({combos.exponents().col(c), static_cast<int>(k), full_gap});
    }
  }
  return report;
}

}  // namespace ssmrom
