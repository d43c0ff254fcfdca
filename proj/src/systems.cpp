#include "ssmrom/systems.hpp"

#include <cmath>

namespace ssmrom {

TimeSeries integrate_rk4(const VectorField& field, const Eigen::VectorXd& x0, double t0,
                         double t_end, double dt) {
  if (dt <= 0.0) throw ArgumentError("integrate_rk4: dt must be positive");
  if (t_end <= t0) throw ArgumentError("integrate_rk4: t_end must exceed t0");
  if (x0.size() != field.dimension)
    throw ArgumentError("integrate_rk4: initial condition dimension mismatch");

  const auto steps = static_cast<Eigen::Index>(std::llround((t_end - t0) / dt));
  TimeSeries out;
  out.t0 = t0;
  out.dt = dt;
  out.values.resize(x0.size(), steps + 1);
  out.values.col(0) = x0;

  Eigen::VectorXd x = x0;
  for (Eigen::Index i = 0; i < steps; ++i) {
    const double t = t0 + dt * static_cast<double>(i);
    const Eigen::VectorXd k1 = field(x, t);
    const Eigen::VectorXd k2 = field(x + 0.5 * dt * k1, t + 0.5 * dt);
    const Eigen::VectorXd k3 = field(x + 0.5 * dt * k2, t + 0.5 * dt);
    const Eigen::VectorXd k4 = field(x + dt * k3, t + dt);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite())
      throw DivergenceError("integrate_rk4: non-finite state at t=" +
                                std::to_string(t + dt) + " (" + field.name + ")",
                            t);
    out.values.col(i + 1) = x;
  }
  return out;
}

VectorField duffing(double damping, double stiffness, double beta, double f_amp,
                    double f_omega) {
  VectorField f;
  f.dimension = 2;
  f.name = "duffing";
  f.rhs = [=](const Eigen::VectorXd& x, double t) {
    Eigen::VectorXd dx(2);
    dx[0] = x[1];
    dx[1] = -damping * x[1] - stiffness * x[0] - beta * x[0] * x[0] * x[0] +
            f_amp * std::cos(f_omega * t);
    return dx;
  };
  // Eigenvalues of [[0,1],[-stiffness,-damping]].
  const std::complex<double> disc =
      std::sqrt(std::complex<double>(damping * damping - 4.0 * stiffness, 0.0));
  f.eigenvalues = {(-damping + disc) / 2.0, (-damping - disc) / 2.0};
  return f;
}

VectorField duffing_single_well(double beta, double f_amp, double f_omega) {
  if (beta <= 0.0) throw ArgumentError("duffing_single_well: beta must be positive");
  VectorField f = duffing(1.0, 1.0, beta, f_amp, f_omega);
  f.name = "duffing_single_well";
  return f;
}

VectorField duffing_double_well(double beta) {
  if (beta == 0.0) throw ArgumentError("duffing_double_well: beta must be nonzero");
  VectorField f = duffing(1.0, -1.0, std::abs(beta));
  f.name = "duffing_double_well";
  return f;
}

VectorField stuart_landau(double alpha0, double beta, double gamma, double omega0) {
  VectorField f;
  f.dimension = 2;
  f.name = "stuart_landau";
  f.rhs = [=](const Eigen::VectorXd& x, double) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    Eigen::VectorXd dx(2);
    dx[0] = (alpha0 + beta * r2) * x[0] - (omega0 + gamma * r2) * x[1];
    dx[1] = (omega0 + gamma * r2) * x[0] + (alpha0 + beta * r2) * x[1];
    return dx;
  };
  f.eigenvalues = {{alpha0, omega0}, {alpha0, -omega0}};
  f.cubic_coefficient = std::complex<double>(beta, gamma);
  if (alpha0 != 0.0 && beta != 0.0 && alpha0 / beta < 0.0)
    f.limit_cycle_radius = std::sqrt(-alpha0 / beta);
  return f;
}

VectorField modal_linear(const std::vector<std::complex<double>>& eigenvalues) {
  const int n = static_cast<int>(eigenvalues.size());
  if (n == 0) throw ArgumentError("modal_linear: empty spectrum");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  int i = 0;
  while (i < n) {
    const auto lam = eigenvalues[static_cast<size_t>(i)];
    if (std::abs(lam.imag()) > 0.0) {
      if (i + 1 >= n ||
          std::abs(eigenvalues[static_cast<size_t>(i + 1)] - std::conj(lam)) > 1e-12)
        throw ArgumentError("modal_linear: complex eigenvalues must come in adjacent "
                            "conjugate pairs");
      A(i, i) = lam.real();
      A(i, i + 1) = -lam.imag();
      A(i + 1, i) = lam.imag();
      A(i + 1, i + 1) = lam.real();
      i += 2;
    } else {
      A(i, i) = lam.real();
      i += 1;
    }
  }
  VectorField f;
  f.dimension = n;
  f.name = "modal_linear";
  f.rhs = [A](const Eigen::VectorXd& x, double) { return Eigen::VectorXd(A * x); };
  f.eigenvalues = eigenvalues;
  return f;
}

PolynomialObservable PolynomialObservable::identity(int dim) {
  PolynomialObservable obs;
  obs.input_dim = dim;
  obs.output_dim = dim;
  obs.degree = 1;
  obs.coeffs = Eigen::MatrixXd::Identity(dim, dim);
  return obs;
}

PolynomialObservable PolynomialObservable::scalar(
    int input_dim, int degree,
    const std::vector<std::pair<Eigen::VectorXi, double>>& terms) {
  PolynomialObservable obs;
  obs.input_dim = input_dim;
  obs.output_dim = 1;
  obs.degree = degree;
  MonomialBasis basis(input_dim, 1, degree);
  obs.coeffs = Eigen::MatrixXd::Zero(1, basis.count());
  for (const auto& [expo, value] : terms) {
    const int col = basis.find(expo);
    if (col < 0) throw ArgumentError("PolynomialObservable: exponent outside basis");
    obs.coeffs(0, col) += value;
  }
  return obs;
}

Eigen::VectorXd PolynomialObservable::operator()(const Eigen::VectorXd& x) const {
  MonomialBasis basis(input_dim, 1, degree);
  return coeffs * basis.eval<double>(x);
}

TimeSeries PolynomialObservable::observe(const TimeSeries& states) const {
  if (states.channels() != input_dim)
    throw ArgumentError("PolynomialObservable: state dimension mismatch");
  MonomialBasis basis(input_dim, 1, degree);
  TimeSeries out;
  out.t0 = states.t0;
  out.dt = states.dt;
  out.values = coeffs * basis.eval_batch<double>(states.values);
  return out;
}

}  // namespace ssmrom
