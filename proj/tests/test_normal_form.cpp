#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "helpers.hpp"
#include "ssmrom/normal_form.hpp"

using namespace ssmrom;
using Cplx = std::complex<double>;

namespace {

// Exact samples of the planar dynamics eta = (Re z, Im z) with
// z' = lambda z + c z^2 zbar, via the closed-form polar flow.
struct SlData {
  Eigen::MatrixXd states;
  Eigen::MatrixXd derivs;
};

SlData sl_eta_data(Cplx lambda, Cplx c,
                   const std::vector<std::array<double, 4>>& segments) {
  const test_helpers::StuartLandauFlow flow{lambda.real(), c.real(), c.imag(), lambda.imag()};
  std::vector<Cplx> zs;
  for (const auto& [rho0, theta0, tspan, dt] : segments) {
    const auto steps = static_cast<Eigen::Index>(std::llround(tspan / dt));
    for (Eigen::Index i = 0; i <= steps; ++i) zs.push_back(flow.z(rho0, theta0, dt * i));
  }
  SlData data;
  data.states.resize(2, static_cast<Eigen::Index>(zs.size()));
  data.derivs.resize(2, static_cast<Eigen::Index>(zs.size()));
  for (size_t j = 0; j < zs.size(); ++j) {
    const Cplx z = zs[j];
    const Cplx dz = lambda * z + c * std::norm(z) * z;
    data.states.col(static_cast<Eigen::Index>(j)) << z.real(), z.imag();
    data.derivs.col(static_cast<Eigen::Index>(j)) << dz.real(), dz.imag();
  }
  return data;
}

// Observable amplitude of channel 0 per unit rho for a chartless model.
double kappa_channel0(const ReducedModel& model) {
  return 2.0 * std::abs(model.linear.B(0, 0));
}

}  // namespace

TEST_CASE("linear part from exact linear data") {
  Eigen::MatrixXd A(2, 2);
  A << -0.1, -1.0,
        1.0, -0.1;
  // States along a spiral, derivatives exactly A*eta.
  Eigen::MatrixXd states(2, 400);
  for (int i = 0; i < 400; ++i) {
    const double t = 0.05 * i;
    states.col(i) << std::exp(-0.1 * t) * std::cos(t), std::exp(-0.1 * t) * std::sin(t);
  }
  const Eigen::MatrixXd derivs = A * states;
  const LinearPart lin = estimate_linear_part(states, derivs, 2.0);

  CHECK(std::abs(lin.Lambda[0] - Cplx(-0.1, 1.0)) < 1e-6);
  CHECK(std::abs(lin.Lambda[1] - Cplx(-0.1, -1.0)) < 1e-6);
  CHECK(lin.partner[0] == 1);
  CHECK((lin.jacobian - A).cwiseAbs().maxCoeff() < 1e-10);
  // Diagonalization residual.
  CHECK((A.cast<Cplx>() * lin.B - lin.B * lin.Lambda.asDiagonal()).norm() < 1e-8);
}

TEST_CASE("pure rotation gives +/- i") {
  Eigen::MatrixXd J(2, 2);
  J << 0.0, -1.0,
       1.0, 0.0;
  Eigen::MatrixXd states(2, 200);
  for (int i = 0; i < 200; ++i) states.col(i) << std::cos(0.05 * i), std::sin(0.05 * i);
  const LinearPart lin = estimate_linear_part(states, J * states, 2.0);
  CHECK(std::abs(lin.Lambda[0] - Cplx(0.0, 1.0)) < 1e-10);
  CHECK(std::abs(lin.Lambda[1] - Cplx(0.0, -1.0)) < 1e-10);
}

TEST_CASE("linear part from the cubic system with an amplitude cutoff") {
  const Cplx lambda(-0.0628, 7.80);
  const Cplx c(-0.0572, -1.67);
  const SlData data = sl_eta_data(lambda, c, {{0.45, 0.0, 120.0, 0.01}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 0.05);
  CHECK(std::abs(lin.Lambda[0].real() - lambda.real()) < 0.02 * std::abs(lambda.real()));
  CHECK(std::abs(lin.Lambda[0].imag() - lambda.imag()) < 0.02 * lambda.imag());
}

TEST_CASE("linear part rejects bad inputs") {
  Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 30);
  CHECK_THROWS_AS(estimate_linear_part(states, states, 1e-9), ArgumentError);

  // Defective (nilpotent-plus-eigenvalue) Jacobian.
  Eigen::MatrixXd A(2, 2);
  A << -1.0, 1.0,
        0.0, -1.0;
  Eigen::MatrixXd big = Eigen::MatrixXd::Random(2, 100);
  CHECK_THROWS_AS(estimate_linear_part(big, A * big, 10.0), SingularFitError);
}

TEST_CASE("resonance structure reproduces the displayed cubic-order matrix") {
  Eigen::MatrixXd A(2, 2);
  A << -0.05, -1.0,
        1.0, -0.05;
  const LinearPart lin = linear_part_from_jacobian(A);  // eigenvalues -0.05 +/- i
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);

  Eigen::MatrixXd expected(2, 7);
  expected << -1, 1, 3, -2, 0, 2, 4,
              -3, -1, 1, -4, -2, 0, 2;
  CHECK((rs.Delta - expected).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(rs.resonant_entries.size() == 2);
  CHECK(rs.resonant_entries[0] == std::pair<int, int>(0, 4));  // z^2 zbar row 1
  CHECK(rs.resonant_entries[1] == std::pair<int, int>(1, 5));  // zbar^2 z row 2

  // No quadratic resonances for a single oscillator pair.
  const ResonanceStructure rs2 = resonance_structure(lin, 2, 1e-8);
  CHECK(rs2.resonant_entries.empty());
}

TEST_CASE("fit on data already in normal form: transform near identity") {
  const Cplx lambda(-0.05, 1.0);
  const Cplx c(-1.0, 0.5);
  const SlData data = sl_eta_data(lambda, c,
                                  {{0.5, 0.0, 30.0, 0.02},
                                   {0.35, 2.0, 30.0, 0.02},
                                   {0.2, 4.0, 30.0, 0.02},
                                   {0.04, 1.0, 80.0, 0.02}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 0.015);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  const ReducedModel model = fit_normal_form(data.states, data.derivs, lin, rs);

  // Physical-amplitude units make the cubic coefficient comparable across
  // eigenvector normalizations: channel 0 is Re z, whose true gain is 1.
  const PolarModel polar = to_polar(model).rescaled_amplitude(kappa_channel0(model));
  CHECK(std::abs(polar.modes[0].alpha[1] - c.real()) < 0.01 * std::abs(c));
  CHECK(std::abs(polar.modes[0].omega[1] - c.imag()) < 0.01 * std::abs(c));
  CHECK(model.Hstar.norm() < 1e-3 * model.Ncoef.norm());
  CHECK(model.converged);

  // Mask discipline is a hard constraint.
  for (const auto& [r, col] : rs.resonant_entries) CHECK(model.Hstar(r, col) == Cplx(0.0));
  for (int r = 0; r < 2; ++r)
    for (int col = 0; col < rs.basis.count(); ++col)
      if (!rs.resonant(r, col)) CHECK(model.Ncoef(r, col) == Cplx(0.0));
}

TEST_CASE("fit on linear data: everything collapses to the linear model") {
  const Cplx lambda(-0.2, 2.0);
  const SlData data = sl_eta_data(lambda, Cplx(0.0, 0.0),
                                  {{0.5, 0.0, 20.0, 0.01}, {0.25, 1.0, 20.0, 0.01}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 1.0);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  const ReducedModel model = fit_normal_form(data.states, data.derivs, lin, rs);
  CHECK(model.Ncoef.norm() < 1e-8);
  CHECK(model.Hstar.norm() < 1e-8);
  CHECK(model.conjugacy_residual < 1e-16);
}

TEST_CASE("fit through a known cubic near-identity distortion") {
  const Cplx lambda(-0.0628, 7.80);
  const Cplx c(-0.0572, -1.67);

  // eta = B (z + H_true z^{2:3}) with H_true supported off the resonant set.
  Eigen::MatrixXcd B(2, 2);
  B << Cplx(0.5, 0.0), Cplx(0.5, 0.0),
       Cplx(0.0, -0.5), Cplx(0.0, 0.5);
  const MonomialBasis basis(2, 2, 3);
  Eigen::MatrixXcd Htrue = Eigen::MatrixXcd::Zero(2, basis.count());
  Htrue(0, 0) = Cplx(0.035, 0.01);   // z^2
  Htrue(0, 2) = Cplx(0.0, -0.02);    // zbar^2
  Htrue(0, 3) = Cplx(0.02, 0.0);     // z^3
  Htrue(0, 6) = Cplx(-0.015, 0.005); // zbar^3
  const auto conj_col = basis.conjugate_permutation();
  for (int col = 0; col < basis.count(); ++col)
    Htrue(1, conj_col[col]) = std::conj(Htrue(0, col));

  const test_helpers::StuartLandauFlow flow{lambda.real(), c.real(), c.imag(), lambda.imag()};
  std::vector<std::array<double, 3>> starts = {{0.45, 0.0, 60.0}, {0.3, 2.5, 60.0}, {0.05, 1.2, 80.0}};
  std::vector<Cplx> zs;
  for (const auto& [rho0, theta0, tspan] : starts) {
    const double dt = 0.01;
    const auto steps = static_cast<Eigen::Index>(std::llround(tspan / dt));
    for (Eigen::Index i = 0; i <= steps; ++i) zs.push_back(flow.z(rho0, theta0, dt * i));
  }
  Eigen::MatrixXd states(2, static_cast<Eigen::Index>(zs.size()));
  Eigen::MatrixXd derivs(2, static_cast<Eigen::Index>(zs.size()));
  for (size_t j = 0; j < zs.size(); ++j) {
    Eigen::VectorXcd z(2);
    z << zs[j], std::conj(zs[j]);
    Eigen::VectorXcd dz(2);
    dz[0] = lambda * z[0] + c * std::norm(z[0]) * z[0];
    dz[1] = std::conj(dz[0]);
    const Eigen::VectorXcd eta = B * (z + Htrue * basis.eval<Cplx>(z));
    const Eigen::VectorXcd deta =
        B * (dz + Htrue * (basis.jacobian<Cplx>(z) * dz));
    states.col(static_cast<Eigen::Index>(j)) = eta.real();
    derivs.col(static_cast<Eigen::Index>(j)) = deta.real();
  }

  const LinearPart lin = estimate_linear_part(states, derivs, 0.02);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  const ReducedModel model = fit_normal_form(states, derivs, lin, rs);
  const PolarModel polar = to_polar(model).rescaled_amplitude(kappa_channel0(model));

  CHECK(std::abs(polar.modes[0].alpha[0] - lambda.real()) < 0.02 * std::abs(lambda.real()));
  CHECK(std::abs(polar.modes[0].omega[0] - lambda.imag()) < 0.02 * lambda.imag());
  CHECK(std::abs(polar.modes[0].alpha[1] - c.real()) < 0.02 * std::abs(c.real()));
  CHECK(std::abs(polar.modes[0].omega[1] - c.imag()) < 0.02 * std::abs(c.imag()));
}

TEST_CASE("coordinate transforms and their round trip") {
  const Cplx lambda(-0.05, 1.0);
  const Cplx c(-0.4, 0.2);
  const SlData data = sl_eta_data(lambda, c, {{0.5, 0.0, 40.0, 0.02}, {0.3, 1.0, 40.0, 0.02}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 0.1);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  const ReducedModel model = fit_normal_form(data.states, data.derivs, lin, rs);

  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
  CHECK(to_normal_coordinates(model, origin).cwiseAbs().maxCoeff() == 0.0);

  // With Hstar = 0 the transform is exactly B^{-1}.
  ReducedModel linear_only = model;
  linear_only.Hstar.setZero();
  Eigen::VectorXd eta(2);
  eta << 0.2, -0.1;
  const Eigen::VectorXcd z_lin = to_normal_coordinates(linear_only, eta);
  CHECK((model.linear.B * z_lin - eta.cast<Cplx>()).cwiseAbs().maxCoeff() < 1e-14);

  test_helpers::Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::VectorXd probe = rng.vector(2, -0.35, 0.35);
    const Eigen::VectorXcd z = to_normal_coordinates(model, probe);
    const Eigen::VectorXcd back = to_reduced_coordinates(model, z);
    CHECK(back.imag().cwiseAbs().maxCoeff() < 1e-8);
    CHECK((back.real() - probe).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("realness of the reconstructed vector field") {
  const Cplx lambda(-0.05, 1.0);
  const Cplx c(-0.4, 0.2);
  const SlData data = sl_eta_data(lambda, c, {{0.5, 0.0, 40.0, 0.02}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 0.1);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  const ReducedModel model = fit_normal_form(data.states, data.derivs, lin, rs);

  test_helpers::Rng rng(37);
  const MonomialBasis& basis = model.basis();
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd eta = rng.vector(2, -0.4, 0.4);
    const Eigen::VectorXcd z = to_normal_coordinates(model, eta);
    const Eigen::VectorXcd dz = normal_form_rhs(model, z);
    // eta' = d/dt h(z) = B (dz + H Dm(z) dz)
    const Eigen::VectorXcd deta =
        model.linear.B * (dz + model.H * (basis.jacobian<Cplx>(z) * dz));
    CHECK(deta.imag().cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("to_polar on hand-built coefficient matrices") {
  Eigen::MatrixXd A(2, 2);
  A << -0.0628, -7.80,
        7.80, -0.0628;
  const LinearPart lin = linear_part_from_jacobian(A);
  ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);

  ReducedModel model{lin, rs, Eigen::MatrixXcd::Zero(2, 7), Eigen::MatrixXcd::Zero(2, 7),
                     Eigen::MatrixXcd::Zero(2, 7)};
  SUBCASE("single resonant coefficient is beta + i gamma") {
    model.Ncoef(0, 4) = Cplx(-0.0572, -1.67);
    model.Ncoef(1, 5) = std::conj(model.Ncoef(0, 4));
    const PolarModel polar = to_polar(model);
    CHECK(polar.modes[0].alpha[0] == doctest::Approx(-0.0628).epsilon(1e-12));
    CHECK(polar.modes[0].omega[0] == doctest::Approx(7.80).epsilon(1e-12));
    CHECK(polar.modes[0].alpha[1] == doctest::Approx(-0.0572).epsilon(1e-12));
    CHECK(polar.modes[0].omega[1] == doctest::Approx(-1.67).epsilon(1e-12));
  }
  SUBCASE("zero coefficients give constant polar functions") {
    const PolarModel polar = to_polar(model);
    CHECK(polar.modes[0].alpha.size() == 2);
    CHECK(polar.modes[0].alpha[1] == 0.0);
    CHECK(polar.modes[0].omega[1] == 0.0);
    CHECK(polar.alpha_at(0, 0.7) == doctest::Approx(-0.0628));
    CHECK(polar.omega_at(0, 0.7) == doctest::Approx(7.80));
  }
  SUBCASE("cross-mode terms are rejected") {
    // A non-phase-invariant entry placed on the resonant slot of a 4d model.
    Eigen::MatrixXd A4 = Eigen::MatrixXd::Zero(4, 4);
    A4.topLeftCorner(2, 2) = A;
    A4(2, 2) = -0.1;
    A4(3, 3) = -0.1;
    A4(2, 3) = -3.1;
    A4(3, 2) = 3.1;
    const LinearPart lin4 = linear_part_from_jacobian(A4);
    ResonanceStructure rs4 = resonance_structure(lin4, 3, 1e-8);
    ReducedModel model4{lin4, rs4, Eigen::MatrixXcd::Zero(4, rs4.basis.count()),
                        Eigen::MatrixXcd::Zero(4, rs4.basis.count()),
                        Eigen::MatrixXcd::Zero(4, rs4.basis.count())};
    // z1 |z2|^2 is resonant for any frequencies but not phase-invariant in rho-only form.
    Eigen::VectorXi expo(4);
    expo << 1, 0, 1, 1;
    const int col = rs4.basis.find(expo);
    REQUIRE(col >= 0);
    model4.Ncoef(0, col) = Cplx(0.3, 0.1);
    CHECK_THROWS_AS(to_polar(model4), UnsupportedStructureError);
  }
}

TEST_CASE("conjugacy error: zero parameters on linear data equal the linear residual") {
  const Cplx lambda(-0.3, 1.5);
  const SlData data = sl_eta_data(lambda, Cplx(0, 0), {{0.4, 0.0, 20.0, 0.02}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 1.0);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  ReducedModel zero{lin, rs, Eigen::MatrixXcd::Zero(2, 7), Eigen::MatrixXcd::Zero(2, 7),
                    Eigen::MatrixXcd::Zero(2, 7)};
  // Linear data, zero nonlinear parameters: the conjugacy residual is the
  // linear-regression residual, which is at the noise floor here.
  CHECK(conjugacy_error(zero, data.states, data.derivs) < 1e-18);

  // On cubic data the zero model with the exact linear part pays exactly the
  // residual of the pure linear model, re-evaluated brute force from the
  // definition: sum_j || B^{-1} (eta_dot - A eta) ||^2.
  const Cplx c(-0.5, 0.2);
  const SlData cubic = sl_eta_data(lambda, c, {{0.4, 0.0, 20.0, 0.02}});
  Eigen::MatrixXd Aexact(2, 2);
  Aexact << lambda.real(), -lambda.imag(),
            lambda.imag(), lambda.real();
  const LinearPart lin_exact = linear_part_from_jacobian(Aexact);
  const Eigen::MatrixXcd Binv = lin_exact.B.inverse();
  double expected = 0.0;
  for (Eigen::Index j = 0; j < cubic.states.cols(); ++j)
    expected += (Binv * (cubic.derivs.col(j) - Aexact * cubic.states.col(j)).cast<Cplx>())
                    .squaredNorm();
  const ResonanceStructure rs_exact = resonance_structure(lin_exact, 3, 1e-8);
  ReducedModel zero2{lin_exact, rs_exact, Eigen::MatrixXcd::Zero(2, 7),
                     Eigen::MatrixXcd::Zero(2, 7), Eigen::MatrixXcd::Zero(2, 7)};
  CHECK(conjugacy_error(zero2, cubic.states, cubic.derivs) ==
        doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("analytic gradient matches finite differences") {
  const Cplx lambda(-0.1, 1.3);
  const Cplx c(-0.3, 0.15);
  const SlData data = sl_eta_data(lambda, c, {{0.45, 0.3, 8.0, 0.05}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 1.0);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  detail::ConjugacyProblem problem(data.states, data.derivs, lin, rs);

  test_helpers::Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd params = rng.vector(problem.num_params(), -0.2, 0.2);
    const Eigen::VectorXd grad = problem.gradient(params);
    const double h = 1e-6;
    Eigen::VectorXd fd(problem.num_params());
    Eigen::VectorXd probe = params;
    for (int q = 0; q < problem.num_params(); ++q) {
      const double save = probe[q];
      probe[q] = save + h;
      const double up = problem.objective(probe);
      probe[q] = save - h;
      const double down = problem.objective(probe);
      probe[q] = save;
      fd[q] = (up - down) / (2.0 * h);
    }
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK((grad - fd).cwiseAbs().maxCoeff() / scale < 1e-5);
  }
}

TEST_CASE("training conjugacy error is non-increasing over nested orders") {
  const Cplx lambda(-0.06, 2.0);
  // Dynamics with genuine 5th-order content.
  const test_helpers::StuartLandauFlow flow{-0.06, -0.3, 0.5, 2.0};
  std::vector<Cplx> zs;
  for (double rho0 : {0.6, 0.45, 0.3}) {
    for (int i = 0; i <= 1500; ++i) {
      zs.push_back(flow.z(rho0, 0.7 * rho0, 0.02 * i));
    }
  }
  Eigen::MatrixXd states(2, static_cast<Eigen::Index>(zs.size()));
  Eigen::MatrixXd derivs(2, static_cast<Eigen::Index>(zs.size()));
  for (size_t j = 0; j < zs.size(); ++j) {
    const Cplx z = zs[j];
    // rho' = alpha rho + beta rho^3 + e5 rho^5 through an extra quintic term.
    const Cplx dz = lambda * z + Cplx(-0.3, 0.5) * std::norm(z) * z +
                    Cplx(0.08, -0.1) * std::norm(z) * std::norm(z) * z;
    states.col(static_cast<Eigen::Index>(j)) << z.real(), z.imag();
    derivs.col(static_cast<Eigen::Index>(j)) << dz.real(), dz.imag();
  }

  const LinearPart lin = estimate_linear_part(states, derivs, 0.08);
  double previous = 1e100;
  Eigen::MatrixXcd warm_h, warm_n;
  bool have_warm = false;
  for (int N : {3, 5, 7}) {
    const ResonanceStructure rs = resonance_structure(lin, N, 1e-8);
    NormalFormOptions opts;
    if (have_warm) {
      Eigen::MatrixXcd h0 = Eigen::MatrixXcd::Zero(2, rs.basis.count());
      Eigen::MatrixXcd n0 = h0;
      h0.leftCols(warm_h.cols()) = warm_h;
      n0.leftCols(warm_n.cols()) = warm_n;
      opts.initial = {h0, n0};
    }
    const ReducedModel model = fit_normal_form(states, derivs, lin, rs, opts);
    CHECK(model.conjugacy_residual <= previous * (1.0 + 1e-9));
    previous = model.conjugacy_residual;
    warm_h = model.Hstar;
    warm_n = model.Ncoef;
    have_warm = true;
  }
}

TEST_CASE("one-step-map fallback recovers the cubic coefficient") {
  const Cplx lambda(-0.05, 1.0);
  const Cplx c(-0.8, 0.4);
  const test_helpers::StuartLandauFlow flow{lambda.real(), c.real(), c.imag(), lambda.imag()};

  // Coarse sampling: about 12 samples per period.
  const double dt = 0.5;
  std::vector<Eigen::MatrixXd> trajectories;
  for (double rho0 : {0.5, 0.3, 0.15}) {
    Eigen::MatrixXd eta(2, 120);
    for (int i = 0; i < 120; ++i) {
      const Cplx z = flow.z(rho0, 0.3, dt * i);
      eta.col(i) << z.real(), z.imag();
    }
    trajectories.push_back(eta);
  }

  Eigen::MatrixXd Aexact(2, 2);
  Aexact << lambda.real(), -lambda.imag(),
            lambda.imag(), lambda.real();
  const LinearPart lin = linear_part_from_jacobian(Aexact);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  const ReducedModel model = fit_normal_form_map(trajectories, dt, lin, rs);

  const PolarModel polar = to_polar(model).rescaled_amplitude(kappa_channel0(model));
  CHECK(std::abs(polar.modes[0].alpha[1] - c.real()) < 0.05 * std::abs(c));
  CHECK(std::abs(polar.modes[0].omega[1] - c.imag()) < 0.05 * std::abs(c));
}

TEST_CASE("iteration budget exhaustion carries the best iterate") {
  const Cplx lambda(-0.05, 1.0);
  const Cplx c(-0.8, 0.4);
  const SlData data = sl_eta_data(lambda, c, {{0.5, 0.0, 25.0, 0.02}});
  const LinearPart lin = estimate_linear_part(data.states, data.derivs, 0.2);
  const ResonanceStructure rs = resonance_structure(lin, 3, 1e-8);
  NormalFormOptions opts;
  opts.max_iterations = 1;
  opts.tolerance = 1e-300;  // unreachable, to force budget exhaustion
  try {
    fit_normal_form(data.states, data.derivs, lin, rs, opts);
    FAIL("expected a convergence error");
  } catch (const NormalFormConvergenceError& e) {
    REQUIRE(e.best != nullptr);
    CHECK(e.residual == e.best->conjugacy_residual);
    CHECK_FALSE(e.best->converged);
    CHECK(e.best->iterations == 1);
  }

  // The same budget without throwing returns the partial fit directly.
  opts.throw_on_max_iterations = false;
  const ReducedModel partial = fit_normal_form(data.states, data.derivs, lin, rs, opts);
  CHECK_FALSE(partial.converged);
}
