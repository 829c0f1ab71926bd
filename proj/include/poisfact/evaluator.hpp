#pragma once

// Held-out evaluation: per-user P@K and AUC over the items a user has not
// interacted with in training, plus pooled Pearson correlation and Poisson
// log-likelihood over the whole test set.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "poisfact/errors.hpp"
#include "poisfact/parallel.hpp"
#include "poisfact/poisson_core.hpp"
#include "poisfact/sparse_data.hpp"
#include "poisfact/trainer.hpp"

namespace poisfact {

struct EvalConfig {
  std::size_t cutoff = 5;
  std::size_t sample_users = 25000;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

struct EvalReport {
  double p_at_k = 0.0;
  double auc = 0.0;
  std::optional<double> pearson_rho;  // empty when either side has zero variance
  double test_loglik = 0.0;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;

  bool operator==(const EvalReport&) const = default;
};

/// <a_u, b_i> for every item i.
inline std::vector<double> score_user(const FactorModel& model, std::size_t u) {
  std::vector<double> scores(model.items());
  auto au = model.A.row(u);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = dot(au, model.B.row(i));
  return scores;
}

namespace detail {

inline bool contains(std::span<const index_t> sorted, std::size_t value) {
  return std::binary_search(sorted.begin(), sorted.end(), static_cast<index_t>(value));
}

}  // namespace detail

/// Items not in `excluded`, ordered by descending score with ties broken by
/// ascending item index. At most `limit` items are returned.
inline std::vector<index_t> rank_items(std::span<const double> scores,
                                       std::span<const index_t> excluded, std::size_t limit) {
  std::vector<index_t> eligible;
  eligible.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!detail::contains(excluded, i)) eligible.push_back(static_cast<index_t>(i));
  const std::size_t top = std::min(limit, eligible.size());
  auto better = [&](index_t a, index_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(top),
                    eligible.end(), better);
  eligible.resize(top);
  return eligible;
}

/// Fraction of the top-K eligible items that are positives. `positives`
/// and `excluded` must be sorted.
inline double precision_at_k(std::span<const double> scores, std::span<const index_t> positives,
                             std::size_t K, std::span<const index_t> excluded) {
  const auto top = rank_items(scores, excluded, K);
  if (top.empty()) return 0.0;
  std::size_t hits = 0;
  for (index_t i : top) hits += detail::contains(positives, i);
  return static_cast<double>(hits) / static_cast<double>(top.size());
}

/// Mann-Whitney AUC: share of (positive, negative) pairs ordered correctly,
/// ties counting one half. Empty when either side is empty.
inline std::optional<double> auc_scores(std::span<const double> positive,
                                        std::span<const double> negative) {
  if (positive.empty() || negative.empty()) return std::nullopt;
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(positive.size() + negative.size());
  for (double s : positive) all.push_back({s, true});
  for (double s : negative) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });

  // Mid-ranks (1-based) over tie groups.
  double positive_rank_sum = 0.0;
  for (std::size_t b = 0; b < all.size();) {
    std::size_t e = b;
    while (e < all.size() && all[e].score == all[b].score) ++e;
    const double mid = 0.5 * static_cast<double>(b + 1 + e);
    for (std::size_t p = b; p < e; ++p)
      if (all[p].positive) positive_rank_sum += mid;
    b = e;
  }
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// AUC over eligible items (not in `excluded`), negatives being the eligible
/// items outside `positives`.
inline std::optional<double> auc_user(std::span<const double> scores,
                                      std::span<const index_t> positives,
                                      std::span<const index_t> excluded) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (detail::contains(excluded, i)) continue;
    (detail::contains(positives, i) ? pos : neg).push_back(scores[i]);
  }
  return auc_scores(pos, neg);
}

/// Pearson correlation, accumulated in a single pass of running co-moments.
inline double pearson_rho(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.size() < 2)
    throw EvaluationError("correlation needs two equally sized lists of length >= 2");
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = predicted[i] - mx;
    const double dy = actual[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (predicted[i] - mx);
    syy += dy * (actual[i] - my);
    sxy += dx * (actual[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation();
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// sum over test entries of -<a_u, b_i> + x_ui log(<a_u, b_i>).
inline double test_loglik(const FactorModel& model, std::span<const Entry> test) {
  double ll = 0.0;
  for (const Entry& e : test) {
    const double z = dot(model.A.row(e.user), model.B.row(e.item));
    ll += -z + e.value * std::log(std::max(z, kDotFloor));
  }
  return ll;
}

/// Runs the held-out protocol. Ranking metrics use a seeded sample of the
/// test users; correlation and likelihood use every test entry.
inline EvalReport evaluate(const FactorModel& model, const SplitPair& split,
                           const EvalConfig& config = {}) {
  if (config.cutoff < 1) throw ConfigError("precision cutoff must be at least 1");
  if (config.sample_users < 1) throw ConfigError("user sample size must be at least 1");
  if (model.users() != split.train.rows() || model.items() != split.train.cols())
    throw DataMismatch("model is " + std::to_string(model.users()) + "x" +
                       std::to_string(model.items()) + " but data is " +
                       std::to_string(split.train.rows()) + "x" +
                       std::to_string(split.train.cols()));
  for (const Entry& e : split.test)
    if (e.user >= model.users() || e.item >= model.items())
      throw DataMismatch("test entry outside model dimensions");

  // Test positives per user; split.test is sorted by (user, item).
  struct UserSlice {
    index_t user;
    std::size_t begin, end;
  };
  std::vector<UserSlice> users;
  std::vector<index_t> test_items;
  test_items.reserve(split.test.size());
  for (std::size_t p = 0; p < split.test.size(); ++p) {
    const Entry& e = split.test[p];
    if (users.empty() || users.back().user != e.user) users.push_back({e.user, p, p});
    test_items.push_back(e.item);
    users.back().end = p + 1;
  }
  if (users.empty()) throw EvaluationError("test set has no users to evaluate");

  std::vector<std::size_t> chosen(users.size());
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (config.sample_users < users.size()) {
    std::mt19937_64 rng(config.seed);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(config.sample_users);
    std::sort(chosen.begin(), chosen.end());
  }

  struct UserResult {
    bool evaluated = false;
    double precision = 0.0;
    double auc = 0.0;
  };
  std::vector<UserResult> results(chosen.size());
  WorkerPool pool(config.threads);
  pool.for_each(chosen.size(), [&](std::size_t c) {
    const UserSlice& slice = users[chosen[c]];
    const auto scores = score_user(model, slice.user);
    const auto train_items = split.train.row(slice.user).indices;
    std::span<const index_t> positives(test_items.data() + slice.begin, slice.end - slice.begin);
    auto auc = auc_user(scores, positives, train_items);
    if (!auc) return;
    results[c] = {true, precision_at_k(scores, positives, config.cutoff, train_items), *auc};
  });

  EvalReport report;
  double p_sum = 0.0, auc_sum = 0.0;
  for (const auto& r : results) {
    if (!r.evaluated) {
      ++report.users_skipped;
      continue;
    }
    ++report.users_evaluated;
    p_sum += r.precision;
    auc_sum += r.auc;
  }
  if (report.users_evaluated == 0) throw EvaluationError("no sampled user could be evaluated");
  report.p_at_k = p_sum / static_cast<double>(report.users_evaluated);
  report.auc = auc_sum / static_cast<double>(report.users_evaluated);

  std::vector<double> predicted, actual;
  predicted.reserve(split.test.size());
  actual.reserve(split.test.size());
  for (const Entry& e : split.test) {
    predicted.push_back(dot(model.A.row(e.user), model.B.row(e.item)));
    actual.push_back(e.value);
  }
  if (predicted.size() >= 2) {
    try {
      report.pearson_rho = pearson_rho(predicted, actual);
    } catch (const UndefinedCorrelation&) {
    }
  }
  report.test_loglik = test_loglik(model, split.test);
  return report;
}

}  // namespace poisfact
