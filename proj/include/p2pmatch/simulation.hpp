// Copyright 2026 The p2pmatch Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The repeated matching loop and its regret accounting. Each step matches on
// the lenders' current UCB utilities (borrower utilities stay fixed), pays
// every matched lender a reward with mean u_b(l), and updates that lender's
// estimate for the borrower it got. Regret is measured per lender against the
// matching that maximizes u_b(l) + u_l(b) on the true utilities.

#ifndef P2PMATCH_SIMULATION_HPP_
#define P2PMATCH_SIMULATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "p2pmatch/bandit.hpp"
#include "p2pmatch/common.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/matching.hpp"
#include "p2pmatch/random.hpp"
#include "p2pmatch/solver.hpp"

namespace p2pmatch {

enum class RegretMode { kExpectedLenderUtility, kRealizedReward, kExpectedBorrowerUtility };

inline const char* to_string(RegretMode mode) {
  switch (mode) {
    case RegretMode::kExpectedLenderUtility: return "expected_lender_utility";
    case RegretMode::kRealizedReward: return "realized_reward";
    case RegretMode::kExpectedBorrowerUtility: return "expected_borrower_utility";
  }
  throw Error(ErrorCode::kModeUnknown, "unknown regret mode");
}

inline RegretMode regret_mode_from_string(std::string_view name) {
  if (name == "expected_lender_utility") return RegretMode::kExpectedLenderUtility;
  if (name == "realized_reward") return RegretMode::kRealizedReward;
  if (name == "expected_borrower_utility") return RegretMode::kExpectedBorrowerUtility;
  throw Error(ErrorCode::kModeUnknown, "unknown regret mode '" + std::string(name) + "'");
}

// Raised when an exact-mode step finds no covering assignment.
class StepError : public Error {
 public:
  StepError(ErrorCode code, std::uint64_t step, const std::string& message)
      : Error(code, "step " + std::to_string(step) + ": " + message), step_(step) {}

  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

struct StepRecord {
  std::uint64_t t = 0;
  std::vector<std::optional<std::size_t>> matched;  // m_l(t)
  std::vector<double> reward;                       // 0 when unmatched
  MatchStatus status = MatchStatus::kOptimal;
  long nodes = 0;
  bool fallback = false;  // exact solve hit a limit; heuristic used instead
};

// Lender x step. cumulative(l, t) = cumulative(l, t - 1) + contribution(l, t).
struct RegretTrace {
  Matrix<double> contribution;
  Matrix<double> cumulative;
};

struct RunResult {
  std::uint64_t run_id = 0;
  std::uint64_t instance_fingerprint = 0;
  std::uint64_t seed = 0;
  std::vector<StepRecord> records;
  RegretTrace trace;
  Matching optimal;          // b_opt, on true utilities
  Matching final_matching;   // the last step's matching
  long total_nodes = 0;
  std::size_t fallback_steps = 0;
};

inline RegretTrace cumulative_regret(const std::vector<StepRecord>& records,
                                     const Matching& optimal,
                                     const MarketInstance& instance,
                                     RegretMode mode = RegretMode::kExpectedLenderUtility) {
  const std::size_t n = instance.num_lenders;
  const std::size_t horizon = records.size();
  if (optimal.lender_match.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "optimal matching does not fit the market");
  }
  // An unmatched lender in b_opt is owed nothing.
  std::vector<double> best(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    if (optimal.lender_match[l]) best[l] = instance.lender_utility(l, *optimal.lender_match[l]);
  }
  RegretTrace trace{Matrix<double>(n, horizon, 0.0), Matrix<double>(n, horizon, 0.0)};
  for (std::size_t s = 0; s < horizon; ++s) {
    const StepRecord& rec = records[s];
    if (rec.matched.size() != n || rec.reward.size() != n) {
      throw Error(ErrorCode::kDimensionMismatch, "step record does not fit the market");
    }
    for (std::size_t l = 0; l < n; ++l) {
      double received = 0.0;
      if (rec.matched[l]) {
        const std::size_t b = *rec.matched[l];
        switch (mode) {
          case RegretMode::kExpectedLenderUtility:
            received = instance.lender_utility(l, b);
            break;
          case RegretMode::kRealizedReward:
            received = rec.reward[l];
            break;
          case RegretMode::kExpectedBorrowerUtility:
            received = instance.borrower_utility(b, l);
            break;
          default:
            throw Error(ErrorCode::kModeUnknown, "unknown regret mode");
        }
      }
      const double d = best[l] - received;
      trace.contribution(l, s) = d;
      trace.cumulative(l, s) = s == 0 ? d : trace.cumulative(l, s - 1) + d;
    }
  }
  return trace;
}

namespace internal {

inline Matching solve_step(const MarketInstance& instance, const ObjectiveWeights& weights,
                           const Matrix<double>& utilities, const SolverOptions& options,
                           const Assignment* hint, std::uint64_t t, bool& fallback) {
  fallback = false;
  if (options.mode == SolveMode::kExact) {
    try {
      Matching m = solve_matching(instance, weights, utilities, options, hint);
      if (m.status == MatchStatus::kInfeasible) {
        throw StepError(ErrorCode::kInfeasible, t, "no assignment covers every borrower");
      }
      return m;
    } catch (const StepError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNodeLimitExceeded &&
          e.code() != ErrorCode::kTimeLimitExceeded) {
        throw;
      }
      fallback = true;
    }
  }
  SolverOptions heuristic = options;
  heuristic.mode = SolveMode::kHeuristic;
  return solve_matching(instance, weights, utilities, heuristic, hint);
}

}  // namespace internal

// One run of the learning loop. The same (instance, weights, model, horizon,
// options, seed, mode) always yields the same result.
inline RunResult run_simulation(const MarketInstance& instance,
                                const ObjectiveWeights& weights,
                                const RewardModel& reward_model, std::uint64_t horizon,
                                const SolverOptions& options, std::uint64_t seed,
                                RegretMode mode = RegretMode::kExpectedLenderUtility) {
  if (horizon < 1) throw Error(ErrorCode::kInvalidHorizon, "horizon must be at least 1");
  require_valid(instance);
  check_weights(weights);
  check_reward_model(reward_model);
  check_solver_options(options);

  const std::size_t n = instance.num_lenders;
  RunResult result;
  result.instance_fingerprint = fingerprint(instance);
  result.seed = seed;
  result.records.reserve(horizon);

  Rng rng(seed);
  BanditState state = init_state(instance);
  std::optional<Assignment> previous;
  for (std::uint64_t t = 1; t <= horizon; ++t) {
    // Utilities reported at the end of step t - 1 (all +inf before step 1).
    const Matrix<double> cu = current_utilities(state, horizon);
    bool fallback = false;
    Matching m = internal::solve_step(instance, weights, cu, options,
                                      previous ? &*previous : nullptr, t, fallback);
    state.step = t;

    StepRecord rec;
    rec.t = t;
    rec.status = m.status;
    rec.nodes = m.stats.nodes;
    rec.fallback = fallback;
    rec.matched.assign(n, std::nullopt);
    rec.reward.assign(n, 0.0);
    if (m.status != MatchStatus::kInfeasible) {
      for (std::size_t l = 0; l < n; ++l) {
        if (!m.lender_match[l]) continue;
        const std::size_t b = *m.lender_match[l];
        const double r = sample_reward(reward_model, instance.borrower_utility(b, l), rng);
        update_on_match(state, l, b, r);
        rec.matched[l] = b;
        rec.reward[l] = r;
      }
      previous = m.assignment;
    }
    result.total_nodes += rec.nodes;
    if (fallback) ++result.fallback_steps;
    result.records.push_back(std::move(rec));
    if (t == horizon) result.final_matching = std::move(m);
  }

  // The hindsight baseline: exact, and independent of the learning loop.
  SolverOptions exact = options;
  exact.mode = SolveMode::kExact;
  result.optimal = solve_optimal_combined(instance, weights, exact);
  if (result.optimal.status == MatchStatus::kInfeasible) {
    throw StepError(ErrorCode::kInfeasible, 0, "no assignment covers every borrower");
  }
  result.trace = cumulative_regret(result.records, result.optimal, instance, mode);
  return result;
}

struct AggregateResult {
  std::size_t num_lenders = 0;
  std::size_t horizon = 0;
  std::size_t runs = 0;
  Matrix<double> mean;    // lender x step
  Matrix<double> stddev;  // population, lender x step
  std::vector<double> terminal_mean;
  std::vector<double> terminal_std;
  // Least-squares slope of the mean trace over its last quarter (at least
  // two points), in regret per step.
  std::vector<double> terminal_slope;
  long total_nodes = 0;
  std::size_t fallback_steps = 0;
};

namespace internal {

inline double least_squares_slope(std::span<const double> y, std::size_t first) {
  const std::size_t count = y.size() - first;
  if (count < 2) return 0.0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = first; i < y.size(); ++i) {
    mean_x += static_cast<double>(i + 1);
    mean_y += y[i];
  }
  mean_x /= static_cast<double>(count);
  mean_y /= static_cast<double>(count);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = first; i < y.size(); ++i) {
    const double dx = static_cast<double>(i + 1) - mean_x;
    sxy += dx * (y[i] - mean_y);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace internal

inline AggregateResult aggregate_runs(const std::vector<RunResult>& results) {
  if (results.empty()) throw Error(ErrorCode::kShapeMismatch, "no runs to aggregate");
  const std::size_t n = results.front().trace.cumulative.rows();
  const std::size_t horizon = results.front().trace.cumulative.cols();
  for (const RunResult& r : results) {
    if (!r.trace.cumulative.same_shape(n, horizon)) {
      throw Error(ErrorCode::kShapeMismatch, "runs differ in lenders or horizon");
    }
  }
  AggregateResult agg;
  agg.num_lenders = n;
  agg.horizon = horizon;
  agg.runs = results.size();
  agg.mean = Matrix<double>(n, horizon, 0.0);
  agg.stddev = Matrix<double>(n, horizon, 0.0);
  const double runs = static_cast<double>(results.size());
  for (const RunResult& r : results) {
    for (std::size_t i = 0; i < n * horizon; ++i) {
      agg.mean.data()[i] += r.trace.cumulative.data()[i];
    }
    agg.total_nodes += r.total_nodes;
    agg.fallback_steps += r.fallback_steps;
  }
  for (double& v : agg.mean.data()) v /= runs;
  for (const RunResult& r : results) {
    for (std::size_t i = 0; i < n * horizon; ++i) {
      const double d = r.trace.cumulative.data()[i] - agg.mean.data()[i];
      agg.stddev.data()[i] += d * d;
    }
  }
  for (double& v : agg.stddev.data()) v = std::sqrt(v / runs);

  const std::size_t tail = std::max<std::size_t>(2, horizon / 4);
  const std::size_t first = horizon > tail ? horizon - tail : 0;
  for (std::size_t l = 0; l < n; ++l) {
    agg.terminal_mean.push_back(horizon ? agg.mean(l, horizon - 1) : 0.0);
    agg.terminal_std.push_back(horizon ? agg.stddev(l, horizon - 1) : 0.0);
    agg.terminal_slope.push_back(internal::least_squares_slope(agg.mean.row(l), first));
  }
  return agg;
}

}  // namespace p2pmatch

#endif  // P2PMATCH_SIMULATION_HPP_
