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

// Matchings between borrowers and lenders, the blocking-pair indicators they
// induce, and the penalized objective
//
//   lambda1 * sum_{b,l} u(l, b) x_bl  -  lambda2 * sum_{b,l} w_bl.
//
// A matching assigns each lender to at most one borrower, and is "covering"
// when every borrower's matched budgets sum to at least its capacity.

#ifndef P2PMATCH_MATCHING_HPP_
#define P2PMATCH_MATCHING_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "p2pmatch/common.hpp"
#include "p2pmatch/market.hpp"

namespace p2pmatch {

struct ObjectiveWeights {
  double lambda1 = 1.0;  // utility weight
  double lambda2 = 1.0;  // blocking-pair penalty

  friend bool operator==(const ObjectiveWeights&,
                         const ObjectiveWeights&) = default;
};

inline void check_weights(const ObjectiveWeights& weights) {
  if (!(weights.lambda1 >= 0.0) || !(weights.lambda2 >= 0.0)) {
    throw Error(ErrorCode::kInvalidValue, "objective weights must be nonnegative");
  }
  if (weights.lambda1 == 0.0 && weights.lambda2 == 0.0) {
    throw Error(ErrorCode::kInvalidValue, "objective weights cannot both be zero");
  }
}

enum class MatchStatus { kOptimal, kHeuristic, kInfeasible };

inline const char* to_string(MatchStatus status) {
  switch (status) {
    case MatchStatus::kOptimal: return "optimal";
    case MatchStatus::kHeuristic: return "heuristic";
    case MatchStatus::kInfeasible: return "infeasible";
  }
  return "unknown";
}

struct SolveStats {
  long nodes = 0;
  long lp_iterations = 0;
};

struct Matching {
  Assignment assignment;  // K x N
  Assignment blocking;    // K x N, minimal w for `assignment`
  std::size_t blocking_count = 0;
  double objective = 0.0;
  std::vector<std::optional<std::size_t>> lender_match;  // M_l
  std::vector<std::vector<std::size_t>> borrower_match;  // M_b
  MatchStatus status = MatchStatus::kInfeasible;
  // When infeasible: a minimal set of borrowers that no assignment of
  // lenders can cover simultaneously.
  std::vector<std::size_t> uncoverable_borrowers;
  SolveStats stats;
};

struct BlockingPairs {
  Assignment blocking;
  std::size_t count = 0;
};

namespace internal {

// Preference lists together with inverse (rank) lookups.
struct PreferenceIndex {
  PreferenceLists lists;
  Matrix<std::size_t> lender_rank;    // N x K, 0 = most preferred borrower
  Matrix<std::size_t> borrower_rank;  // K x N, 0 = most preferred lender
};

inline PreferenceIndex index_preferences(const MarketInstance& instance) {
  PreferenceIndex index;
  index.lists = preferences_from_utilities(instance);
  index.lender_rank = Matrix<std::size_t>(instance.num_lenders, instance.num_borrowers);
  index.borrower_rank = Matrix<std::size_t>(instance.num_borrowers, instance.num_lenders);
  for (std::size_t l = 0; l < instance.num_lenders; ++l) {
    const auto& list = index.lists.lender[l];
    for (std::size_t r = 0; r < list.size(); ++r) index.lender_rank(l, list[r]) = r;
  }
  for (std::size_t b = 0; b < instance.num_borrowers; ++b) {
    const auto& list = index.lists.borrower[b];
    for (std::size_t r = 0; r < list.size(); ++r) index.borrower_rank(b, list[r]) = r;
  }
  return index;
}

inline void check_assignment(const MarketInstance& instance,
                             const Assignment& assignment) {
  if (!assignment.same_shape(instance.num_borrowers, instance.num_lenders)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "assignment must be borrowers x lenders");
  }
  for (std::size_t l = 0; l < instance.num_lenders; ++l) {
    int matched = 0;
    for (std::size_t b = 0; b < instance.num_borrowers; ++b) {
      const std::uint8_t v = assignment(b, l);
      if (v > 1) throw Error(ErrorCode::kInvalidArgument, "assignment must be binary");
      matched += v;
    }
    if (matched > 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "lender " + std::to_string(l) + " is matched more than once");
    }
  }
}

// Minimal w for x. For each pair (b, l) the left-hand side
//   c_b x_bl + c_b * #{l' >_b l : x_bl' = 1} + q_l * [l matched to b' >_l b]
// is compared against c_b; w_bl = 1 exactly when it falls short.
inline BlockingPairs blocking_pairs(const MarketInstance& instance,
                                    const PreferenceIndex& prefs,
                                    const Assignment& assignment) {
  const std::size_t k = instance.num_borrowers;
  const std::size_t n = instance.num_lenders;
  std::vector<std::size_t> match_rank(n, k);  // rank of l's borrower, k = none
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t l = 0; l < n; ++l) {
      if (assignment(b, l)) match_rank[l] = prefs.lender_rank(l, b);
    }
  }
  BlockingPairs out{Assignment(k, n, 0), 0};
  for (std::size_t b = 0; b < k; ++b) {
    const double c = instance.capacity[b];
    std::size_t preferred_matched = 0;
    for (const std::size_t l : prefs.lists.borrower[b]) {
      const double x = assignment(b, l);
      const double lender_better = match_rank[l] < prefs.lender_rank(l, b) ? 1.0 : 0.0;
      const double lhs = c * x + c * static_cast<double>(preferred_matched) +
                         instance.budget[l] * lender_better;
      if (!(lhs >= c)) {
        out.blocking(b, l) = 1;
        ++out.count;
      }
      if (assignment(b, l)) ++preferred_matched;
    }
  }
  return out;
}

inline bool is_covering(const MarketInstance& instance, const Assignment& x) {
  for (std::size_t b = 0; b < instance.num_borrowers; ++b) {
    double funded = 0.0;
    for (std::size_t l = 0; l < instance.num_lenders; ++l) {
      if (x(b, l)) funded += instance.budget[l];
    }
    if (!(funded >= instance.capacity[b])) return false;
  }
  return true;
}

inline bool lex_less(const Assignment& a, const Assignment& b) {
  return std::lexicographical_compare(a.data().begin(), a.data().end(),
                                      b.data().begin(), b.data().end());
}

}  // namespace internal

inline BlockingPairs blocking_pairs(const MarketInstance& instance,
                                    const Assignment& assignment) {
  internal::check_assignment(instance, assignment);
  return internal::blocking_pairs(instance, internal::index_preferences(instance),
                                  assignment);
}

// `utility` is lender x borrower: the lender utilities for the stable
// matching objective, or combined_utility() for the hindsight baseline.
inline double objective_value(const MarketInstance& instance,
                              const Assignment& assignment,
                              const Assignment& blocking,
                              const ObjectiveWeights& weights,
                              const Matrix<double>& utility) {
  const std::size_t k = instance.num_borrowers;
  const std::size_t n = instance.num_lenders;
  if (!assignment.same_shape(k, n) || !blocking.same_shape(k, n) ||
      !utility.same_shape(n, k)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "objective inputs disagree with the market dimensions");
  }
  double total_utility = 0.0;
  double total_blocking = 0.0;
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t l = 0; l < n; ++l) {
      if (assignment(b, l)) total_utility += utility(l, b);
      if (blocking(b, l)) total_blocking += 1.0;
    }
  }
  return weights.lambda1 * total_utility - weights.lambda2 * total_blocking;
}

namespace internal {

inline Matching make_matching(const MarketInstance& instance,
                              const PreferenceIndex& prefs, Assignment x,
                              const ObjectiveWeights& weights,
                              const Matrix<double>& utility, MatchStatus status) {
  Matching m;
  BlockingPairs w = blocking_pairs(instance, prefs, x);
  m.objective = objective_value(instance, x, w.blocking, weights, utility);
  m.blocking = std::move(w.blocking);
  m.blocking_count = w.count;
  m.lender_match.assign(instance.num_lenders, std::nullopt);
  m.borrower_match.assign(instance.num_borrowers, {});
  for (std::size_t b = 0; b < instance.num_borrowers; ++b) {
    for (std::size_t l = 0; l < instance.num_lenders; ++l) {
      if (x(b, l)) {
        m.lender_match[l] = b;
        m.borrower_match[b].push_back(l);
      }
    }
  }
  m.assignment = std::move(x);
  m.status = status;
  return m;
}

inline Assignment deferred_acceptance(const MarketInstance& instance,
                                      const PreferenceIndex& prefs) {
  const std::size_t k = instance.num_borrowers;
  const std::size_t n = instance.num_lenders;
  std::vector<std::size_t> next_choice(n, 0);
  std::vector<std::vector<std::size_t>> held(k);
  std::vector<double> held_budget(k, 0.0);
  std::deque<std::size_t> free_lenders;
  for (std::size_t l = 0; l < n; ++l) free_lenders.push_back(l);

  while (!free_lenders.empty()) {
    const std::size_t l = free_lenders.front();
    free_lenders.pop_front();
    if (next_choice[l] >= k) continue;  // list exhausted: stays unmatched
    const std::size_t b = prefs.lists.lender[l][next_choice[l]++];
    held[b].push_back(l);
    held_budget[b] += instance.budget[l];
    // Shed the least preferred holdings while coverage survives without them.
    while (held[b].size() > 1) {
      auto worst = std::max_element(
          held[b].begin(), held[b].end(), [&](std::size_t a, std::size_t c) {
            return prefs.borrower_rank(b, a) < prefs.borrower_rank(b, c);
          });
      const double q = instance.budget[*worst];
      if (!(held_budget[b] - q >= instance.capacity[b])) break;
      held_budget[b] -= q;
      free_lenders.push_back(*worst);
      held[b].erase(worst);
    }
  }

  Assignment x(k, n, 0);
  for (std::size_t b = 0; b < k; ++b) {
    for (const std::size_t l : held[b]) x(b, l) = 1;
  }
  return x;
}

}  // namespace internal

// Lender-proposing deferred acceptance adapted to budget cover. Each lender
// ends up with at most one borrower; coverage is attempted, not guaranteed.
inline Assignment deferred_acceptance_warm_start(const MarketInstance& instance) {
  return internal::deferred_acceptance(instance,
                                       internal::index_preferences(instance));
}

}  // namespace p2pmatch

#endif  // P2PMATCH_MATCHING_HPP_
