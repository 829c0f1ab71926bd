#pragma once

// Per-vector update rules for the alternating scheme. Each call improves one
// row of the factor matrix being optimized while the other matrix is held
// fixed. Both solvers are deterministic and touch only `x`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "poisfact/errors.hpp"
#include "poisfact/poisson_core.hpp"

namespace poisfact {

enum class SolverMethod { ProxGrad, ConjGrad };

struct LineSearchOptions {
  double armijo_c = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 20;
};

struct SolverChoice {
  SolverMethod method = SolverMethod::ProxGrad;
  int tau = 1;              // prox-grad steps per vector per outer iteration
  int cg_max_updates = 5;   // CG iterations per vector per outer iteration
  double cg_tolerance = 1e-9;  // on the projected-gradient infinity norm
  LineSearchOptions line_search;
};

struct UpdateStats {
  std::size_t clamps = 0;
  int steps = 0;
  double objective_before = std::numeric_limits<double>::quiet_NaN();
  double objective_after = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

[[noreturn]] inline void throw_non_finite(std::size_t vector_index) {
  std::string where = vector_index == kNoIndex ? "" : " at row " + std::to_string(vector_index);
  throw NumericFailure("non-finite factor" + where, 0, vector_index);
}

}  // namespace detail

/// `tau` repetitions of x <- Prox_{alpha h}(x - alpha * grad f(x)), with
/// f = -sum b_p log(a_p'x) and h = s'x + penalty. `alpha` is constant across
/// the repetitions.
inline UpdateStats prox_grad_update(std::span<double> x, const RegressionView& view, double alpha,
                                    const RegularizationSpec& reg, int tau = 1,
                                    std::size_t vector_index = kNoIndex) {
  UpdateStats stats;
  std::vector<double> grad(x.size());
  for (int step = 0; step < tau; ++step) {
    stats.clamps += gradient_vector(view, x, grad);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= alpha * grad[j];
    apply_prox(x, alpha, view.sum, reg);
    ++stats.steps;
  }
  if (!all_finite(x)) detail::throw_non_finite(vector_index);
  return stats;
}

namespace detail {

/// Full per-vector objective, +inf outside the domain of the log terms.
inline double objective_or_inf(const RegressionView& view, std::span<const double> x,
                               const RegularizationSpec& reg) {
  double obj = dot(view.sum, x);
  for (std::size_t p = 0; p < view.size(); ++p) {
    const double z = dot(view.a(p), x);
    if (!(z > 0.0)) return std::numeric_limits<double>::infinity();
    obj -= view.counts[p] * std::log(z);
  }
  return obj + penalty(x, reg);
}

/// Gradient of the full objective (sum vector and penalty included).
inline std::size_t full_gradient(const RegressionView& view, std::span<const double> x,
                                 const RegularizationSpec& reg, std::span<double> g) {
  std::size_t clamps = gradient_vector(view, x, g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] += view.sum[j];
    g[j] += reg.kind == RegKind::L2 ? 2.0 * reg.lambda * x[j] : reg.lambda;
  }
  return clamps;
}

/// Curvature of the objective along d at x.
inline double directional_curvature(const RegressionView& view, std::span<const double> x,
                                    std::span<const double> d, const RegularizationSpec& reg) {
  double c = 0.0;
  for (std::size_t p = 0; p < view.size(); ++p) {
    auto a = view.a(p);
    const double z = std::max(dot(a, x), kDotFloor);
    const double ad = dot(a, d);
    c += view.counts[p] * (ad * ad) / (z * z);
  }
  if (reg.kind == RegKind::L2) c += 2.0 * reg.lambda * dot(d, d);
  return c;
}

}  // namespace detail

/// Minimizes s'x - sum b_p log(a_p'x) + penalty(x) over x >= 0 with
/// projected Polak-Ribiere nonlinear CG. Each iteration starts from the 1-D
/// Newton step along the search direction and backtracks under the projected
/// Armijo rule. The direction resets to steepest descent when the active set
/// changes or the PR coefficient goes negative. Accepted steps never raise
/// the objective.
inline UpdateStats conj_grad_update(std::span<double> x, const RegressionView& view,
                                    const RegularizationSpec& reg, const SolverChoice& opts = {},
                                    std::size_t vector_index = kNoIndex) {
  const std::size_t k = x.size();
  const auto& ls = opts.line_search;
  UpdateStats stats;

  std::vector<double> g(k), pg(k), pg_prev(k), d(k), d_prev(k), trial(k);
  std::vector<char> active(k), active_prev(k);
  double f = detail::objective_or_inf(view, x, reg);
  stats.objective_before = f;
  bool have_prev = false;

  for (int it = 0; it < opts.cg_max_updates; ++it) {
    stats.clamps += detail::full_gradient(view, x, reg, g);

    double pg_norm = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      active[j] = x[j] <= 0.0 && g[j] >= 0.0;
      pg[j] = active[j] ? 0.0 : g[j];
      pg_norm = std::max(pg_norm, std::abs(pg[j]));
    }
    if (!(pg_norm >= opts.cg_tolerance)) break;

    bool steepest = true;
    if (have_prev && active == active_prev) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        num += pg[j] * (pg[j] - pg_prev[j]);
        den += pg_prev[j] * pg_prev[j];
      }
      const double beta = den > 0.0 ? num / den : 0.0;
      if (beta > 0.0) {
        double slope = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          d[j] = active[j] ? 0.0 : -pg[j] + beta * d_prev[j];
          slope += pg[j] * d[j];
        }
        steepest = !(slope < 0.0);
      }
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (steepest || attempt == 1) {
        if (attempt == 1 && steepest) break;  // steepest descent already failed
        for (std::size_t j = 0; j < k; ++j) d[j] = -pg[j];
        steepest = true;
      }

      double t = 1.0;
      const double curvature = detail::directional_curvature(view, x, d, reg);
      const double slope = dot(g, d);
      if (curvature > 0.0 && std::isfinite(curvature)) {
        t = -slope / curvature;
      } else {
        double to_bound = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j)
          if (d[j] < 0.0) to_bound = std::min(to_bound, x[j] / -d[j]);
        if (std::isfinite(to_bound) && to_bound > 0.0) t = to_bound;
      }
      if (!(t > 0.0) || !std::isfinite(t)) t = 1.0;

      for (int bt = 0; bt <= ls.max_backtracks; ++bt, t *= ls.shrink) {
        double decrease = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          trial[j] = std::max(0.0, x[j] + t * d[j]);
          decrease += g[j] * (trial[j] - x[j]);
        }
        if (!(decrease < 0.0)) break;
        const double f_trial = detail::objective_or_inf(view, trial, reg);
        if (f_trial <= f + ls.armijo_c * decrease && f_trial <= f) {
          std::copy(trial.begin(), trial.end(), x.begin());
          f = f_trial;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;

    ++stats.steps;
    std::swap(pg_prev, pg);
    std::swap(active_prev, active);
    d_prev = d;
    have_prev = true;
  }

  stats.objective_after = f;
  if (!all_finite(x)) detail::throw_non_finite(vector_index);
  return stats;
}

}  // namespace poisfact
