#pragma once

// Alternating proximal gradients for Poisson matrix factorization.
//
// Each outer iteration freezes B, recomputes s_B = sum_i b_i and updates
// every user row from that user's nonzero entries only; then freezes A,
// recomputes s_A and updates every item row from the column view. Rows are
// updated in parallel: a row update reads only frozen state and writes only
// its own row, so results are identical for any worker count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "poisfact/errors.hpp"
#include "poisfact/factor_matrix.hpp"
#include "poisfact/parallel.hpp"
#include "poisfact/poisson_core.hpp"
#include "poisfact/sparse_data.hpp"
#include "poisfact/vector_solvers.hpp"

namespace poisfact {

struct TrainConfig {
  std::size_t k = 40;
  double alpha = 1e-7;  // initial step size, halved after every iteration (ProxGrad only)
  double lambda = 1e9;
  int iterations = 10;
  SolverChoice solver;
  RegKind reg = RegKind::L2;
  std::uint64_t seed = 42;
  std::size_t threads = 1;

  static TrainConfig prox_grad_defaults() { return {}; }

  static TrainConfig conj_grad_defaults() {
    TrainConfig c;
    c.lambda = 0.0;
    c.iterations = 30;
    c.solver.method = SolverMethod::ConjGrad;
    c.solver.cg_max_updates = 5;
    return c;
  }

  RegularizationSpec regularization() const { return {reg, lambda}; }

  void validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (solver.tau < 1) throw ConfigError("tau must be at least 1");
    if (solver.cg_max_updates < 1) throw ConfigError("CG inner updates must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
  }
};

struct FactorModel {
  FactorMatrix A;  // users x k
  FactorMatrix B;  // items x k

  std::size_t k() const noexcept { return A.cols(); }
  std::size_t users() const noexcept { return A.rows(); }
  std::size_t items() const noexcept { return B.rows(); }

  bool operator==(const FactorModel&) const = default;
};

struct IterationProgress {
  int iteration = 0;  // 1-based
  double objective = 0.0;
  double seconds = 0.0;
};

using ProgressHook = std::function<void(const IterationProgress&)>;

struct TrainReport {
  int iterations_run = 0;
  double final_objective = 0.0;
  std::vector<double> objective_trace;
  std::vector<double> seconds_per_iteration;
  std::size_t clamp_events = 0;
  std::size_t zero_user_rows = 0;  // among users with at least one entry
  std::size_t zero_item_rows = 0;
  std::size_t cold_users = 0;
  std::size_t cold_items = 0;
  // CG only: per-vector updates that ended above their starting objective.
  std::size_t objective_increases = 0;
};

struct IterationWorkspace {
  std::vector<double> sum_users;  // s_A
  std::vector<double> sum_items;  // s_B
  std::size_t clamp_events = 0;
  std::vector<double> objective_trace;
};

/// Every entry drawn from Gamma(1, 1), A first then B, from one seeded stream.
inline FactorModel init_factors(std::size_t m, std::size_t n, std::size_t k, std::uint64_t seed) {
  if (m < 1 || n < 1 || k < 1) throw ConfigError("factor dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gamma11(1.0);
  auto draw = [&] {
    double v = 0.0;
    while (v == 0.0) v = gamma11(rng);
    return v;
  };
  FactorModel model{FactorMatrix(m, k), FactorMatrix(n, k)};
  for (double& v : model.A.values()) v = draw();
  for (double& v : model.B.values()) v = draw();
  return model;
}

inline double training_objective(const SparseInteractions& data, const FactorModel& model,
                                  const RegularizationSpec& reg) {
  return full_objective(data, model.A, model.B, reg);
}

namespace detail {

enum class Side { Users, Items };

inline const char* side_name(Side side) { return side == Side::Users ? "user" : "item"; }

struct HalfIterationResult {
  std::size_t clamps = 0;
  std::size_t objective_increases = 0;
  std::size_t zero_rows = 0;
  std::size_t warm_rows = 0;
};

inline HalfIterationResult update_side(Side side, const SparseInteractions& data,
                                       FactorMatrix& target, const FactorMatrix& fixed,
                                       std::span<const double> sum, double alpha,
                                       const TrainConfig& config, int iteration,
                                       WorkerPool& pool) {
  const auto reg = config.regularization();
  std::vector<UpdateStats> stats(target.rows());
  try {
    pool.for_each(target.rows(), [&](std::size_t r) {
      auto nz = side == Side::Users ? data.row(r) : data.col(r);
      auto view = RegressionView::of(fixed, nz, sum);
      if (config.solver.method == SolverMethod::ProxGrad)
        stats[r] = prox_grad_update(target.row(r), view, alpha, reg, config.solver.tau, r);
      else
        stats[r] = conj_grad_update(target.row(r), view, reg, config.solver, r);
    });
  } catch (const NumericFailure& e) {
    throw NumericFailure(std::string("iteration ") + std::to_string(iteration) + ": " +
                             side_name(side) + " update produced " + e.what() +
                             "; try a smaller step size or a larger regularization",
                         static_cast<std::size_t>(iteration), e.vector_index());
  }

  HalfIterationResult out;
  for (std::size_t r = 0; r < target.rows(); ++r) {
    out.clamps += stats[r].clamps;
    if (stats[r].objective_after > stats[r].objective_before) ++out.objective_increases;
    auto row = target.row(r);
    if (!all_finite(row)) {
      throw NumericFailure("iteration " + std::to_string(iteration) + ": non-finite " +
                               side_name(side) + " factor at row " + std::to_string(r) +
                               "; try a smaller step size or a larger regularization",
                           static_cast<std::size_t>(iteration), r);
    }
    const bool cold = (side == Side::Users ? data.row(r) : data.col(r)).empty();
    if (cold) continue;
    ++out.warm_rows;
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) ++out.zero_rows;
  }
  if (out.warm_rows > 0 && out.zero_rows == out.warm_rows) {
    throw DegenerateSolution("iteration " + std::to_string(iteration) + ": every " +
                                 side_name(side) + " factor collapsed to zero; try a smaller "
                                 "step size or a smaller regularization",
                             static_cast<std::size_t>(iteration));
  }
  return out;
}

}  // namespace detail

/// Runs `config.iterations` outer iterations starting from `model`.
inline TrainReport train_from(const SparseInteractions& data, const TrainConfig& config,
                              FactorModel& model, const ProgressHook& progress = {}) {
  config.validate();
  if (data.empty()) throw EmptyDatasetError();
  if (model.users() != data.rows() || model.items() != data.cols() ||
      model.A.cols() != model.B.cols())
    throw DataMismatch("initial factors do not match the data dimensions");

  using clock = std::chrono::steady_clock;
  WorkerPool pool(config.threads);
  IterationWorkspace ws;
  TrainReport report;
  const auto reg = config.regularization();
  double alpha = config.alpha;

  for (int it = 1; it <= config.iterations; ++it) {
    const auto start = clock::now();

    ws.sum_items = column_sums(model.B);
    auto users = detail::update_side(detail::Side::Users, data, model.A, model.B, ws.sum_items,
                                     alpha, config, it, pool);
    ws.sum_users = column_sums(model.A);
    auto items = detail::update_side(detail::Side::Items, data, model.B, model.A, ws.sum_users,
                                     alpha, config, it, pool);

    std::size_t clamps = 0;
    const double objective = full_objective(data, model.A, model.B, reg, &clamps);
    ws.clamp_events += users.clamps + items.clamps + clamps;
    ws.objective_trace.push_back(objective);

    report.objective_increases += users.objective_increases + items.objective_increases;
    report.zero_user_rows = users.zero_rows;
    report.zero_item_rows = items.zero_rows;
    report.cold_users = data.rows() - users.warm_rows;
    report.cold_items = data.cols() - items.warm_rows;

    if (config.solver.method == SolverMethod::ProxGrad) alpha /= 2.0;

    const double seconds = std::chrono::duration<double>(clock::now() - start).count();
    report.seconds_per_iteration.push_back(seconds);
    report.iterations_run = it;
    if (progress) progress({it, objective, seconds});
  }

  report.objective_trace = ws.objective_trace;
  report.final_objective = ws.objective_trace.back();
  report.clamp_events = ws.clamp_events;
  return report;
}

/// Gamma(1, 1) initialization followed by train_from.
inline std::pair<FactorModel, TrainReport> train(const SparseInteractions& data,
                                                 const TrainConfig& config,
                                                 const ProgressHook& progress = {}) {
  config.validate();
  if (data.empty()) throw EmptyDatasetError();
  FactorModel model = init_factors(data.rows(), data.cols(), config.k, config.seed);
  TrainReport report = train_from(data, config, model, progress);
  return {std::move(model), std::move(report)};
}

}  // namespace poisfact
