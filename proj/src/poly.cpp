#include "ssmrom/poly.hpp"

#include <algorithm>
#include <string>

namespace ssmrom {

long monomial_count(int dims, int order) {
  // C(dims + order - 1, order), computed incrementally to stay exact.
  long num = 1;
  for (int k = 1; k <= order; ++k) num = num * (dims - 1 + k) / k;
  return num;
}

long monomial_count(int dims, int min_order, int max_order) {
  long total = 0;
  for (int j = min_order; j <= max_order; ++j) total += monomial_count(dims, j);
  return total;
}

namespace {

// Emits the exponent vectors of total order `order` in descending
// lexicographic order (first variable most significant).
void emit_order_block(int dims, int order, Eigen::VectorXi& scratch, int var,
                      Eigen::MatrixXi& out, int& col) {
  if (var == dims - 1) {
    scratch[var] = order;
    out.col(col++) = scratch;
    return;
  }
  for (int e = order; e >= 0; --e) {
    scratch[var] = e;
    emit_order_block(dims, order - e, scratch, var + 1, out, col);
  }
}

}  // namespace

MonomialBasis::MonomialBasis(int dims, int min_order, int max_order)
    : dims_(dims), min_order_(min_order), max_order_(max_order) {
  if (dims < 1) throw ArgumentError("MonomialBasis: dims must be >= 1");
  if (min_order < 1 || min_order > max_order)
    throw ArgumentError("MonomialBasis: need 1 <= min_order <= max_order, got [" +
                        std::to_string(min_order) + ", " + std::to_string(max_order) + "]");

  exponents_.resize(dims, monomial_count(dims, min_order, max_order));
  block_start_.assign(max_order - min_order + 2, 0);
  Eigen::VectorXi scratch(dims);
  int col = 0;
  for (int j = min_order; j <= max_order; ++j) {
    block_start_[j - min_order] = col;
    emit_order_block(dims, j, scratch, 0, exponents_, col);
  }
  block_start_.back() = col;
}

std::pair<int, int> MonomialBasis::order_block(int order) const {
  if (order < min_order_ || order > max_order_)
    throw ArgumentError("MonomialBasis::order_block: order " + std::to_string(order) +
                        " outside [" + std::to_string(min_order_) + ", " +
                        std::to_string(max_order_) + "]");
  return {block_start_[order - min_order_], block_start_[order - min_order_ + 1]};
}

int MonomialBasis::find(const Eigen::VectorXi& expo) const {
  if (expo.size() != dims_) return -1;
  const int order = expo.sum();
  if (order < min_order_ || order > max_order_ || expo.minCoeff() < 0) return -1;
  auto [first, last] = order_block(order);
  // Columns within a block are sorted in descending lex order.
  int lo = first, hi = last - 1;
  while (lo <= hi) {
    const int mid = (lo + hi) / 2;
    int cmp = 0;
    for (int i = 0; i < dims_; ++i) {
      if (exponents_(i, mid) != expo[i]) {
        cmp = exponents_(i, mid) > expo[i] ? 1 : -1;
        break;
      }
    }
    if (cmp == 0) return mid;
    if (cmp > 0)
      lo = mid + 1;  // mid is lexicographically larger, target is to the right
    else
      hi = mid - 1;
  }
  return -1;
}

std::vector<int> MonomialBasis::conjugate_permutation() const {
  if (dims_ % 2 != 0)
    throw ArgumentError("conjugate_permutation requires an even number of variables");
  std::vector<int> partner(static_cast<size_t>(dims_));
  for (int i = 0; i < dims_; i += 2) {
    partner[static_cast<size_t>(i)] = i + 1;
    partner[static_cast<size_t>(i + 1)] = i;
  }
  return conjugate_permutation(partner);
}

std::vector<int> MonomialBasis::conjugate_permutation(const std::vector<int>& partner) const {
  if (static_cast<int>(partner.size()) != dims_)
    throw ArgumentError("conjugate_permutation: partner map size mismatch");
  std::vector<int> perm(count());
  Eigen::VectorXi swapped(dims_);
  for (int c = 0; c < count(); ++c) {
    for (int i = 0; i < dims_; ++i) swapped[partner[static_cast<size_t>(i)]] = exponents_(i, c);
    const int target = find(swapped);
    if (target < 0)
      throw ArgumentError("conjugate_permutation: basis is not closed under pair swap");
    perm[c] = target;
  }
  return perm;
}

void MonomialBasis::check_point_dim(int n) const {
  if (n != dims_)
    throw ArgumentError("MonomialBasis: point has " + std::to_string(n) +
                        " entries, basis has " + std::to_string(dims_) + " variables");
}

}  // namespace ssmrom
