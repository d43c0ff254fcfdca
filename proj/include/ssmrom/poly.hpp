#pragma once

#include <Eigen/Core>
#include <complex>
#include <utility>
#include <vector>

#include "ssmrom/errors.hpp"

namespace ssmrom {

// Number of monomials of exactly `order` in `dims` variables: C(dims+order-1, order).
long monomial_count(int dims, int order);
// Total count over an inclusive order range.
long monomial_count(int dims, int min_order, int max_order);

// Canonical family of multivariate monomials between two polynomial orders.
//
// One column per monomial, one row per variable. Columns are in graded
// lexicographic order: all order-j monomials precede order-(j+1) ones, and
// within an order block columns are sorted with the first variable most
// significant (descending exponent). For two variables and orders 2..3:
//
//   [ 2 1 0 3 2 1 0 ]
//   [ 0 1 2 0 1 2 3 ]
//
// This ordering fixes the meaning of every coefficient matrix downstream,
// so it must never change.
class MonomialBasis {
public:
  MonomialBasis(int dims, int min_order, int max_order);

  int dims() const { return dims_; }
  int min_order() const { return min_order_; }
  int max_order() const { return max_order_; }
  int count() const { return static_cast<int>(exponents_.cols()); }
  const Eigen::MatrixXi& exponents() const { return exponents_; }

  int order_of(int col) const { return exponents_.col(col).sum(); }

  // Half-open column range [first, last) of the order-j block.
  std::pair<int, int> order_block(int order) const;

  // Column index of an exponent vector, or -1 if outside the basis.
  int find(const Eigen::VectorXi& expo) const;

  // Column permutation induced by swapping the variables of each
  // consecutive pair (z1,z2), (z3,z4), ...  Requires even dims. Used to
  // mirror coefficients between complex-conjugate rows.
  std::vector<int> conjugate_permutation() const;

  // Same permutation for a general partner map (partner[i] = i marks a
  // self-conjugate variable).
  std::vector<int> conjugate_permutation(const std::vector<int>& partner) const;

  // Value of every monomial at one point.
  template <class Scalar>
  Eigen::Vector<Scalar, Eigen::Dynamic> eval(
      const Eigen::Vector<Scalar, Eigen::Dynamic>& point) const {
    check_point_dim(static_cast<int>(point.size()));
    PowerTable<Scalar> pw(point, max_order_);
    Eigen::Vector<Scalar, Eigen::Dynamic> out(count());
    for (int c = 0; c < count(); ++c) {
      Scalar v = Scalar(1);
      for (int i = 0; i < dims_; ++i) v *= pw(i, exponents_(i, c));
      out[c] = v;
    }
    return out;
  }

  // Values of every monomial at each column of `points`; result is count() x P.
  template <class Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eval_batch(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& points) const {
    check_point_dim(static_cast<int>(points.rows()));
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(count(), points.cols());
    for (Eigen::Index j = 0; j < points.cols(); ++j)
      out.col(j) = eval<Scalar>(points.col(j));
    return out;
  }

  // Jacobian at one point: entry (c, i) = d(monomial c)/d(point i).
  template <class Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jacobian(
      const Eigen::Vector<Scalar, Eigen::Dynamic>& point) const {
    check_point_dim(static_cast<int>(point.size()));
    PowerTable<Scalar> pw(point, max_order_);
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(count(), dims_);
    for (int c = 0; c < count(); ++c) {
      for (int i = 0; i < dims_; ++i) {
        const int e = exponents_(i, c);
        if (e == 0) {
          out(c, i) = Scalar(0);
          continue;
        }
        Scalar v = Scalar(static_cast<double>(e)) * pw(i, e - 1);
        for (int k = 0; k < dims_; ++k)
          if (k != i) v *= pw(k, exponents_(k, c));
        out(c, i) = v;
      }
    }
    return out;
  }

private:
  template <class Scalar>
  struct PowerTable {
    PowerTable(const Eigen::Vector<Scalar, Eigen::Dynamic>& point, int max_order)
        : table(point.size(), max_order + 1) {
      for (Eigen::Index i = 0; i < point.size(); ++i) {
        table(i, 0) = Scalar(1);
        for (int e = 1; e <= max_order; ++e) table(i, e) = table(i, e - 1) * point[i];
      }
    }
    Scalar operator()(Eigen::Index var, int e) const { return table(var, e); }
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> table;
  };

  void check_point_dim(int n) const;

  int dims_;
  int min_order_;
  int max_order_;
  Eigen::MatrixXi exponents_;
  std::vector<int> block_start_;  // column offset of each order block
};

}  // namespace ssmrom
