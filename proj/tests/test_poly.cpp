#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <complex>

#include "helpers.hpp"
#include "ssmrom/poly.hpp"

using ssmrom::MonomialBasis;
using ssmrom::monomial_count;

namespace {

long binomial(long n, long k) {
  long r = 1;
  for (long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST_CASE("two-variable orders 2..3 reproduces the displayed exponent matrix") {
  MonomialBasis basis(2, 2, 3);
  Eigen::MatrixXi expected(2, 7);
  expected << 2, 1, 0, 3, 2, 1, 0,
              0, 1, 2, 0, 1, 2, 3;
  CHECK(basis.exponents() == expected);
}

TEST_CASE("four-variable quadratic block reproduces the displayed exponent matrix") {
  MonomialBasis basis(4, 2, 2);
  Eigen::MatrixXi expected(4, 10);
  expected << 2, 1, 1, 1, 0, 0, 0, 0, 0, 0,
              0, 1, 0, 0, 2, 1, 1, 0, 0, 0,
              0, 0, 1, 0, 0, 1, 0, 2, 1, 0,
              0, 0, 0, 1, 0, 0, 1, 0, 1, 2;
  CHECK(basis.exponents() == expected);
}

TEST_CASE("single variable, single order") {
  MonomialBasis basis(1, 1, 1);
  CHECK(basis.count() == 1);
  CHECK(basis.exponents()(0, 0) == 1);
}

TEST_CASE("invalid order ranges are rejected") {
  CHECK_THROWS_AS(MonomialBasis(2, 0, 3), ssmrom::ArgumentError);
  CHECK_THROWS_AS(MonomialBasis(2, 4, 3), ssmrom::ArgumentError);
  CHECK_THROWS_AS(MonomialBasis(0, 1, 2), ssmrom::ArgumentError);
}

TEST_CASE("column count matches the stars-and-bars formula") {
  for (int d = 1; d <= 6; ++d)
    for (int b = 1; b <= 10; ++b) {
      long expected = 0;
      for (int j = 1; j <= b; ++j) expected += binomial(d + j - 1, j);
      CHECK(monomial_count(d, 1, b) == expected);
      CHECK(MonomialBasis(d, 1, b).count() == expected);
    }
}

TEST_CASE("evaluation on the stated ordering") {
  MonomialBasis basis(2, 2, 3);
  Eigen::VectorXd point(2);
  point << 2.0, 3.0;
  const Eigen::VectorXd values = basis.eval<double>(point);
  Eigen::VectorXd expected(7);
  expected << 4, 6, 9, 8, 12, 18, 27;
  CHECK((values - expected).cwiseAbs().maxCoeff() == 0.0);

  CHECK(basis.eval<double>(Eigen::VectorXd::Zero(2)).cwiseAbs().maxCoeff() == 0.0);

  MonomialBasis order1(2, 1, 1);
  Eigen::VectorXd ab(2);
  ab << -1.7, 0.4;
  CHECK(order1.eval<double>(ab) == ab);

  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(basis.eval<double>(wrong), ssmrom::ArgumentError);
}

TEST_CASE("evaluation is multiplicative in the point scale") {
  test_helpers::Rng rng(7);
  MonomialBasis basis(3, 1, 5);
  const Eigen::VectorXd point = rng.vector(3, -2.0, 2.0);
  const double c = 1.37;
  const Eigen::VectorXd base = basis.eval<double>(point);
  const Eigen::VectorXd scaled = basis.eval<double>(Eigen::VectorXd(c * point));
  for (int k = 0; k < basis.count(); ++k)
    CHECK(scaled[k] == doctest::Approx(std::pow(c, basis.order_of(k)) * base[k]).epsilon(1e-12));
}

TEST_CASE("hand-computed jacobian at the quadratic block") {
  MonomialBasis basis(2, 2, 2);
  Eigen::VectorXd point(2);
  point << 1.0, 1.0;
  const Eigen::MatrixXd jac = basis.jacobian<double>(point);
  Eigen::MatrixXd expected(3, 2);
  expected << 2, 0,
              1, 1,
              0, 2;
  CHECK((jac - expected).cwiseAbs().maxCoeff() == 0.0);

  CHECK(basis.jacobian<double>(Eigen::VectorXd::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian matches central finite differences at random points") {
  test_helpers::Rng rng(42);
  MonomialBasis basis(4, 2, 5);
  const double step = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd point = rng.vector(4, -1.5, 1.5);
    const Eigen::MatrixXd jac = basis.jacobian<double>(point);
    for (int i = 0; i < 4; ++i) {
      Eigen::VectorXd lo = point, hi = point;
      lo[i] -= step;
      hi[i] += step;
      const Eigen::VectorXd fd =
          (basis.eval<double>(hi) - basis.eval<double>(lo)) / (2.0 * step);
      const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
      CHECK((jac.col(i) - fd).cwiseAbs().maxCoeff() / scale < 1e-6);
    }
  }
}

TEST_CASE("complex evaluation agrees with the real path on real inputs") {
  MonomialBasis basis(2, 2, 4);
  Eigen::VectorXd point(2);
  point << 0.3, -1.1;
  const Eigen::VectorXcd zvals = basis.eval<std::complex<double>>(point.cast<std::complex<double>>());
  const Eigen::VectorXd rvals = basis.eval<double>(point);
  CHECK((zvals.real() - rvals).cwiseAbs().maxCoeff() == 0.0);
  CHECK(zvals.imag().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("order blocks and lookup") {
  MonomialBasis basis(3, 2, 4);
  auto [first, last] = basis.order_block(3);
  for (int c = first; c < last; ++c) CHECK(basis.order_of(c) == 3);
  for (int c = 0; c < basis.count(); ++c)
    CHECK(basis.find(basis.exponents().col(c)) == c);
  Eigen::VectorXi outside(3);
  outside << 5, 0, 0;
  CHECK(basis.find(outside) == -1);
}

TEST_CASE("conjugate permutation swaps paired variables and is an involution") {
  MonomialBasis basis(2, 2, 3);
  const auto perm = basis.conjugate_permutation();
  // Columns: z^2, z zbar, zbar^2, z^3, z^2 zbar, z zbar^2, zbar^3.
  CHECK(perm == std::vector<int>({2, 1, 0, 6, 5, 4, 3}));
  for (int c = 0; c < basis.count(); ++c) CHECK(perm[perm[c]] == c);
}
