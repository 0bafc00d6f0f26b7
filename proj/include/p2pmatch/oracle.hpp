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

// Brute-force ground truth for tiny markets. Every map from lenders to
// {unmatched, borrower 1..K} is visited as a base-(K+1) counter, so memory
// stays O(N) regardless of how many candidates are enumerated.

#ifndef P2PMATCH_ORACLE_HPP_
#define P2PMATCH_ORACLE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "p2pmatch/common.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/matching.hpp"

namespace p2pmatch {

struct EnumerationBudget {
  std::uint64_t max_assignments = 2000000;
};

enum class UtilitySelector { kLenderOnly, kCombined };

namespace internal {

// (K+1)^N, saturating at UINT64_MAX.
inline std::uint64_t assignment_space(const MarketInstance& instance) {
  std::uint64_t total = 1;
  const std::uint64_t base = instance.num_borrowers + 1;
  for (std::size_t l = 0; l < instance.num_lenders; ++l) {
    if (total > std::numeric_limits<std::uint64_t>::max() / base) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= base;
  }
  return total;
}

inline void check_budget(const MarketInstance& instance,
                         const EnumerationBudget& budget) {
  if (budget.max_assignments == 0) {
    throw Error(ErrorCode::kInvalidValue, "enumeration budget must be positive");
  }
  const std::uint64_t space = assignment_space(instance);
  if (space > budget.max_assignments) {
    throw Error(ErrorCode::kBudgetExceeded,
                "(K+1)^N = " + std::to_string(space) + " exceeds budget of " +
                    std::to_string(budget.max_assignments));
  }
}

// Calls `visit` with every lender-feasible assignment; the counter digit of
// lender l is 0 for unmatched, b+1 for borrower b.
inline void for_each_assignment(const MarketInstance& instance,
                                const std::function<void(const Assignment&)>& visit) {
  const std::size_t k = instance.num_borrowers;
  const std::size_t n = instance.num_lenders;
  std::vector<std::size_t> digit(n, 0);
  Assignment x(k, n, 0);
  while (true) {
    visit(x);
    std::size_t l = 0;
    while (l < n) {
      if (digit[l] > 0) x(digit[l] - 1, l) = 0;
      if (++digit[l] <= k) {
        x(digit[l] - 1, l) = 1;
        break;
      }
      digit[l] = 0;
      ++l;
    }
    if (l == n) return;
  }
}

}  // namespace internal

inline Matching enumerate_optimal(const MarketInstance& instance,
                                  const ObjectiveWeights& weights,
                                  UtilitySelector selector,
                                  const EnumerationBudget& budget = {}) {
  check_weights(weights);
  internal::check_budget(instance, budget);
  const Matrix<double> utility = selector == UtilitySelector::kCombined
                                     ? combined_utility(instance)
                                     : instance.lender_utility;
  const internal::PreferenceIndex prefs = internal::index_preferences(instance);

  Assignment best;
  double best_value = 0.0;
  bool found = false;
  internal::for_each_assignment(instance, [&](const Assignment& x) {
    if (!internal::is_covering(instance, x)) return;
    const BlockingPairs w = internal::blocking_pairs(instance, prefs, x);
    const double value = objective_value(instance, x, w.blocking, weights, utility);
    if (!found || value > best_value ||
        (value == best_value && internal::lex_less(x, best))) {
      best = x;
      best_value = value;
      found = true;
    }
  });
  if (!found) {
    Matching m = internal::make_matching(
        instance, prefs, Assignment(instance.num_borrowers, instance.num_lenders, 0),
        weights, utility, MatchStatus::kInfeasible);
    return m;
  }
  return internal::make_matching(instance, prefs, std::move(best), weights, utility,
                                 MatchStatus::kOptimal);
}

// Number of assignments meeting both hard constraints (lender at most once,
// every borrower covered).
inline std::uint64_t count_feasible(const MarketInstance& instance,
                                    const EnumerationBudget& budget = {}) {
  internal::check_budget(instance, budget);
  std::uint64_t count = 0;
  internal::for_each_assignment(instance, [&](const Assignment& x) {
    if (internal::is_covering(instance, x)) ++count;
  });
  return count;
}

// Fewest blocking pairs over all covering assignments; nullopt if none cover.
inline std::optional<std::size_t> min_blocking_count(
    const MarketInstance& instance, const EnumerationBudget& budget = {}) {
  internal::check_budget(instance, budget);
  const internal::PreferenceIndex prefs = internal::index_preferences(instance);
  std::optional<std::size_t> best;
  internal::for_each_assignment(instance, [&](const Assignment& x) {
    if (!internal::is_covering(instance, x)) return;
    const std::size_t count = internal::blocking_pairs(instance, prefs, x).count;
    if (!best.has_value() || count < *best) best = count;
  });
  return best;
}

}  // namespace p2pmatch

#endif  // P2PMATCH_ORACLE_HPP_
