#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "helpers.hpp"
#include "ssmrom/systems.hpp"

using namespace ssmrom;

TEST_CASE("scalar linear decay reaches 1/e") {
  VectorField f;
  f.dimension = 1;
  f.rhs = [](const Eigen::VectorXd& x, double) { return Eigen::VectorXd(-x); };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const TimeSeries out = integrate_rk4(f, x0, 0.0, 1.0, 0.01);
  CHECK(out.samples() == 101);
  CHECK(std::abs(out.values(0, 100) - std::exp(-1.0)) < 1e-9);
}

TEST_CASE("harmonic oscillator energy drift") {
  VectorField f;
  f.dimension = 2;
  f.rhs = [](const Eigen::VectorXd& x, double) {
    Eigen::VectorXd dx(2);
    dx << x[1], -x[0];
    return dx;
  };
  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.0;
  const double period = 2.0 * M_PI;
  auto energy = [](const Eigen::VectorXd& x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };

  // RK4 loses |R|^2 - 1 ~ (w dt)^6/72 per step; at dt = T/200 over 100 periods
  // that accumulates to ~2.7e-7, measured below and frozen with margin.
  {
    const TimeSeries out = integrate_rk4(f, x0, 0.0, 100.0 * period, period / 200.0);
    const double drift = std::abs(energy(out.values.col(out.samples() - 1)) - energy(x0));
    CHECK(drift < 5e-7);
    CHECK(drift > 1e-8);  // the coarse step genuinely drifts; see dt = T/500 below
  }
  {
    const TimeSeries out = integrate_rk4(f, x0, 0.0, 100.0 * period, period / 500.0);
    const double drift = std::abs(energy(out.values.col(out.samples() - 1)) - energy(x0));
    CHECK(drift < 1e-8);
  }
}

TEST_CASE("rk4 is 4th order on the linear testbed") {
  VectorField f;
  f.dimension = 1;
  f.rhs = [](const Eigen::VectorXd& x, double) { return Eigen::VectorXd(-x); };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const double exact = std::exp(-2.0);

  std::vector<double> errors;
  for (double dt : {0.2, 0.1, 0.05, 0.025}) {
    const TimeSeries out = integrate_rk4(f, x0, 0.0, 2.0, dt);
    errors.push_back(std::abs(out.values(0, out.samples() - 1) - exact));
  }
  for (size_t i = 1; i < errors.size(); ++i) {
    const double ratio = errors[i - 1] / errors[i];
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
  }
}

TEST_CASE("divergence raises with the last finite time") {
  VectorField f;
  f.dimension = 1;
  f.rhs = [](const Eigen::VectorXd& x, double) { return Eigen::VectorXd(x.array().square().matrix()); };
  Eigen::VectorXd x0(1);
  x0 << 5.0;
  CHECK_THROWS_AS(integrate_rk4(f, x0, 0.0, 10.0, 0.05), DivergenceError);
}

TEST_CASE("stuart-landau converges to the known limit-cycle radius") {
  // Growth rate from the vortex-shedding-style regime.
  const VectorField f = stuart_landau(0.0584, -0.479, 0.0, 0.553);
  REQUIRE(f.limit_cycle_radius.has_value());
  const double expected = std::sqrt(0.0584 / 0.479);
  CHECK(*f.limit_cycle_radius == doctest::Approx(expected).epsilon(1e-12));

  Eigen::VectorXd x0(2);
  x0 << 0.01, 0.0;
  const TimeSeries out = integrate_rk4(f, x0, 0.0, 400.0, 0.02);
  const double r_end = out.values.col(out.samples() - 1).norm();
  CHECK(r_end == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("stuart-landau with both terms damping has only the trivial attractor") {
  const VectorField f = stuart_landau(-0.1, -0.3, 0.2, 1.0);
  CHECK_FALSE(f.limit_cycle_radius.has_value());
  Eigen::VectorXd x0(2);
  x0 << 0.8, -0.2;
  const TimeSeries out = integrate_rk4(f, x0, 0.0, 200.0, 0.02);
  CHECK(out.values.col(out.samples() - 1).norm() < 1e-6);
}

TEST_CASE("stuart-landau polar form matches the closed-form flow") {
  const double alpha0 = -0.0628, beta = -0.0572, gamma = -1.67, omega0 = 7.80;
  const VectorField f = stuart_landau(alpha0, beta, gamma, omega0);
  const test_helpers::StuartLandauFlow flow{alpha0, beta, gamma, omega0};

  Eigen::VectorXd x0(2);
  const double rho0 = 0.4, theta0 = 0.3;
  x0 << rho0 * std::cos(theta0), rho0 * std::sin(theta0);
  const TimeSeries out = integrate_rk4(f, x0, 0.0, 20.0, 0.002);
  const Eigen::VectorXd xT = out.values.col(out.samples() - 1);
  const std::complex<double> zT = flow.z(rho0, theta0, 20.0);
  CHECK(std::abs(std::complex<double>(xT[0], xT[1]) - zT) < 1e-7);
}

TEST_CASE("duffing single well decays to the origin from separate starts") {
  const VectorField f = duffing_single_well(0.5);
  for (double x0v : {0.6, -1.1}) {
    Eigen::VectorXd x0(2);
    x0 << x0v, 0.0;
    const TimeSeries out = integrate_rk4(f, x0, 0.0, 60.0, 0.01);
    CHECK(out.values.col(out.samples() - 1).norm() < 1e-8);
  }
}

TEST_CASE("duffing double well sends nearby starts to distinct equilibria") {
  const VectorField f = duffing_double_well(1.0);
  auto settle = [&](double x0v) {
    Eigen::VectorXd x0(2);
    x0 << x0v, 0.0;
    const TimeSeries out = integrate_rk4(f, x0, 0.0, 80.0, 0.01);
    return out.values(0, out.samples() - 1);
  };
  const double left = settle(-0.4);
  const double right = settle(0.4);
  CHECK(left == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(right == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("advertised eigenvalues match a finite-difference jacobian at the origin") {
  const std::vector<VectorField> fields = {
      stuart_landau(-0.0628, -0.0572, -1.67, 7.80),
      duffing(1.0, 1.0, 0.4),
      modal_linear({{-0.5, 2.0}, {-0.5, -2.0}, {-3.0, 0.0}}),
  };
  const double h = 1e-6;
  for (const auto& f : fields) {
    const int n = f.dimension;
    Eigen::MatrixXd jac(n, n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd lo = Eigen::VectorXd::Zero(n), hi = Eigen::VectorXd::Zero(n);
      lo[i] = -h;
      hi[i] = h;
      jac.col(i) = (f(hi, 0.0) - f(lo, 0.0)) / (2.0 * h);
    }
    Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(jac).eigenvalues();
    // Match each advertised eigenvalue against the numerically closest one.
    for (const auto lam : f.eigenvalues) {
      double best = 1e9;
      for (Eigen::Index k = 0; k < eig.size(); ++k)
        best = std::min(best, std::abs(eig[k] - lam));
      CHECK(best < 1e-6);
    }
  }
}

TEST_CASE("polynomial observable evaluates its terms") {
  Eigen::VectorXi lin(2), quad(2), cube(2);
  lin << 1, 0;
  quad << 2, 0;
  cube << 3, 0;
  const auto obs = PolynomialObservable::scalar(2, 3, {{lin, 1.0}, {quad, 0.5}, {cube, -0.25}});
  Eigen::VectorXd x(2);
  x << 2.0, 7.0;
  CHECK(obs(x)[0] == doctest::Approx(2.0 + 0.5 * 4.0 - 0.25 * 8.0).epsilon(1e-14));

  const auto ident = PolynomialObservable::identity(3);
  Eigen::VectorXd y(3);
  y << 1.0, -2.0, 3.0;
  CHECK(ident(y) == y);
}

TEST_CASE("constructor parameter validation") {
  CHECK_THROWS_AS(duffing_single_well(-1.0), ArgumentError);
  CHECK_THROWS_AS(duffing_double_well(0.0), ArgumentError);
  CHECK_THROWS_AS(modal_linear({}), ArgumentError);
  CHECK_THROWS_AS(modal_linear({{-1.0, 2.0}, {-1.0, 3.0}}), ArgumentError);
}
