#pragma once

#include <Eigen/Core>
#include <cmath>
#include <complex>
#include <random>

namespace test_helpers {

// Deterministic uniform values in [lo, hi).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(engine_()) /
                    (static_cast<double>(std::mt19937_64::max()) + 1.0);
  }
  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

private:
  std::mt19937_64 engine_;
};

// Closed-form polar solution of rho' = alpha rho + beta rho^3,
// theta' = omega + gamma rho^2 (alpha != 0), used as an exact data oracle.
struct StuartLandauFlow {
  double alpha, beta, gamma, omega;

  double rho(double rho0, double t) const {
    const double v0 = 1.0 / (rho0 * rho0);
    const double a = v0 + beta / alpha;
    const double v = a * std::exp(-2.0 * alpha * t) - beta / alpha;
    return 1.0 / std::sqrt(v);
  }
  double theta(double rho0, double theta0, double t) const {
    const double v0 = 1.0 / (rho0 * rho0);
    const double a = v0 + beta / alpha;
    double integral;
    if (beta == 0.0) {
      integral = (std::exp(2.0 * alpha * t) - 1.0) / (2.0 * alpha * a);
    } else {
      integral = -1.0 / (2.0 * beta) *
                 (std::log(std::abs(2.0 * alpha * a - 2.0 * beta * std::exp(2.0 * alpha * t))) -
                  std::log(std::abs(2.0 * alpha * a - 2.0 * beta)));
    }
    return theta0 + omega * t + gamma * integral;
  }
  std::complex<double> z(double rho0, double theta0, double t) const {
    return std::polar(rho(rho0, t), theta(rho0, theta0, t));
  }
};

}  // namespace test_helpers
