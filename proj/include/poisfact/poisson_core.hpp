#pragma once

// Poisson loss under the identity link, the per-vector regression objective
// with its gradient and proximal operators, and the factorization objective.
//
// The zero entries of the count matrix never need to be visited: their
// contribution sum_u sum_i <a_u, b_i> collapses to <sum_u a_u, sum_i b_i>,
// so every objective here costs O(nnz * k + (m + n) * k).

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "poisfact/errors.hpp"
#include "poisfact/factor_matrix.hpp"
#include "poisfact/sparse_data.hpp"

namespace poisfact {

enum class RegKind { L2, L1 };

struct RegularizationSpec {
  RegKind kind = RegKind::L2;
  double lambda = 0.0;
};

/// Floor applied to predicted rates inside logarithms and denominators.
inline constexpr double kDotFloor = 1e-12;

/// One Poisson regression problem: the vector x being solved for is scored
/// against the rows `a_p` of a fixed factor matrix selected by the nonzero
/// pattern, with counts `b_p`. `sum` is the sum of ALL rows of the fixed
/// matrix, which accounts for the zero-count observations.
struct RegressionView {
  const FactorMatrix* fixed = nullptr;
  std::span<const index_t> rows;
  std::span<const double> counts;
  std::span<const double> sum;

  static RegressionView of(const FactorMatrix& fixed, SparseVectorView nonzeros,
                           std::span<const double> sum) {
    assert(sum.size() == fixed.cols());
    return {&fixed, nonzeros.indices, nonzeros.values, sum};
  }

  std::size_t dim() const noexcept { return sum.size(); }
  std::size_t size() const noexcept { return rows.size(); }
  std::span<const double> a(std::size_t p) const noexcept { return fixed->row(rows[p]); }
};

/// z - y log z, omitting the log(y!) constant.
inline double poisson_loss_entry(double z, double y) {
  if (y == 0.0) return z;
  if (!(z > 0.0)) throw DomainError("Poisson rate must be positive for a positive count");
  return z - y * std::log(z);
}

inline double penalty(std::span<const double> x, const RegularizationSpec& reg) noexcept {
  double acc = 0.0;
  if (reg.kind == RegKind::L2) {
    for (double v : x) acc += v * v;
  } else {
    for (double v : x) acc += std::abs(v);
  }
  return reg.lambda * acc;
}

/// s'x - sum_p b_p log(a_p'x) + penalty(x). Throws DomainError when a
/// positive-count prediction is not positive.
inline double objective_vector(const RegressionView& view, std::span<const double> x,
                               const RegularizationSpec& reg) {
  double obj = dot(view.sum, x);
  for (std::size_t p = 0; p < view.size(); ++p) {
    const double z = dot(view.a(p), x);
    if (!(z > 0.0)) throw DomainError("non-positive prediction for an observed count");
    obj -= view.counts[p] * std::log(z);
  }
  return obj + penalty(x, reg);
}

/// Gradient of the smooth part -sum_p b_p log(a_p'x) written into `grad`.
/// Returns how many predictions were raised to kDotFloor.
inline std::size_t gradient_vector(const RegressionView& view, std::span<const double> x,
                                   std::span<double> grad) noexcept {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::size_t clamps = 0;
  for (std::size_t p = 0; p < view.size(); ++p) {
    auto a = view.a(p);
    double z = dot(a, x);
    if (z < kDotFloor) {
      z = kDotFloor;
      ++clamps;
    }
    const double w = view.counts[p] / z;
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] -= w * a[j];
  }
  return clamps;
}

inline std::vector<double> gradient_vector(const RegressionView& view, std::span<const double> x) {
  std::vector<double> g(x.size());
  gradient_vector(view, x, g);
  return g;
}

/// In-place prox of alpha * (s'y + lambda ||y||^2) over y >= 0.
inline void prox_l2_inplace(std::span<double> x, double alpha, std::span<const double> s,
                            double lambda) noexcept {
  const double denom = 2.0 * lambda * alpha + 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::max(0.0, (x[j] - alpha * s[j]) / denom);
}

/// In-place prox of alpha * (s'y + lambda ||y||_1) over y >= 0.
inline void prox_l1_inplace(std::span<double> x, double alpha, std::span<const double> s,
                            double lambda) noexcept {
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::max(0.0, x[j] - alpha * (lambda + s[j]));
}

inline std::vector<double> prox_l2(std::span<const double> x, double alpha,
                                   std::span<const double> s, double lambda) {
  std::vector<double> out(x.begin(), x.end());
  prox_l2_inplace(out, alpha, s, lambda);
  return out;
}

inline std::vector<double> prox_l1(std::span<const double> x, double alpha,
                                   std::span<const double> s, double lambda) {
  std::vector<double> out(x.begin(), x.end());
  prox_l1_inplace(out, alpha, s, lambda);
  return out;
}

inline void apply_prox(std::span<double> x, double alpha, std::span<const double> s,
                       const RegularizationSpec& reg) noexcept {
  if (reg.kind == RegKind::L2)
    prox_l2_inplace(x, alpha, s, reg.lambda);
  else
    prox_l1_inplace(x, alpha, s, reg.lambda);
}

/// Factorization objective
///   <s_A, s_B> - sum_{x_ui > 0} x_ui log(<a_u, b_i>) + penalty(A) + penalty(B)
/// with the squared Frobenius norm for L2 and the entrywise sum for L1.
/// Predictions are floored at kDotFloor; `clamps` receives how often.
inline double full_objective(const SparseInteractions& data, const FactorMatrix& A,
                             const FactorMatrix& B, const RegularizationSpec& reg,
                             std::size_t* clamps = nullptr) {
  assert(A.rows() == data.rows() && B.rows() == data.cols() && A.cols() == B.cols());
  const auto sA = column_sums(A);
  const auto sB = column_sums(B);
  double obj = dot(sA, sB);
  std::size_t fired = 0;
  for (std::size_t u = 0; u < data.rows(); ++u) {
    auto r = data.row(u);
    auto au = A.row(u);
    for (std::size_t p = 0; p < r.size(); ++p) {
      double z = dot(au, B.row(r.indices[p]));
      if (z < kDotFloor) {
        z = kDotFloor;
        ++fired;
      }
      obj -= r.values[p] * std::log(z);
    }
  }
  if (clamps) *clamps = fired;
  return obj + penalty(A.values(), reg) + penalty(B.values(), reg);
}

}  // namespace poisfact
