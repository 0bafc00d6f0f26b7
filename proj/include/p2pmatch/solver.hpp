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

// Solvers for the penalized stable-matching integer program:
//
//   max  lambda1 sum u(l,b) x_bl - lambda2 sum w_bl
//   s.t. sum_b x_bl <= 1                                   (each lender)
//        sum_l q_l x_bl >= c_b                             (each borrower)
//        c_b x_bl + c_b sum_{l' >_b l} x_bl'
//             + q_l sum_{b' >_l b} x_b'l >= c_b (1 - w_bl) (each pair)
//        x, w binary.
//
// w only appears in its own row and with a negative objective weight, so the
// optimal w is the minimal one for x (see blocking_pairs). The search runs
// over x alone.
//
// Exact mode has two engines.
//
// kAnchorSearch (default) enumerates, for every borrower b, its most preferred
// matched lender a_b. Once a_b is fixed the blocking pairs of b are exactly
// the lenders b ranks above a_b, minus those "rescued" by being matched to a
// borrower they prefer while q_l >= c_b. So the penalty becomes a constant
// plus per-lender bonuses, and the remaining choice per lender is separable
// except for the coverage rows. A second stage assigns the other lenders one
// at a time. Bounds: each lender at its best allowed option (less the
// cheapest way to give every short borrower one more lender), and, when that
// does not prune, a Lagrangian bound with multipliers on the coverage rows.
// For undecided borrowers the penalty is bounded by the lenders that must
// block whatever anchor is chosen.
//
// kLpBranchAndBound is best-first branch-and-bound on x. Node bounds come
// from the LP relaxation in which w is continuous in [0, 1]. Before relaxing,
// each stability row is divided by c_b and the lender-side coefficient q_l /
// c_b is replaced by 1 when q_l >= c_b and by 0 otherwise. Both rewrites keep
// the same integer points, since with binary x the row holds iff some term
// reaches 1. They tighten the relaxation, and they make the LP value at an
// integral x equal its true objective.
//
// Both return the same optimum: ties between equal objectives go to the
// lexicographically smallest assignment in row-major (borrower-major) order.

#ifndef P2PMATCH_SOLVER_HPP_
#define P2PMATCH_SOLVER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "p2pmatch/common.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/matching.hpp"
#include "p2pmatch/simplex.hpp"

namespace p2pmatch {

enum class SolveMode { kExact, kHeuristic };

enum class ExactAlgorithm { kAnchorSearch, kLpBranchAndBound };

struct SolverOptions {
  SolveMode mode = SolveMode::kExact;
  ExactAlgorithm algorithm = ExactAlgorithm::kAnchorSearch;
  long node_limit = 200000;
  double pivot_tolerance = 1e-9;
  double integrality_tolerance = 1e-6;
  // Wall-clock cap for one exact solve; 0 disables it.
  double time_budget_seconds = 0.0;
};

inline void check_solver_options(const SolverOptions& options) {
  if (!(options.pivot_tolerance > 0.0) || !(options.integrality_tolerance > 0.0)) {
    throw Error(ErrorCode::kInvalidValue, "solver tolerances must be positive");
  }
  if (options.node_limit < 1) {
    throw Error(ErrorCode::kInvalidValue, "node limit must be positive");
  }
  if (options.time_budget_seconds < 0.0) {
    throw Error(ErrorCode::kInvalidValue, "time budget must be nonnegative");
  }
}

namespace internal {

// Exhaustive search for an assignment covering every borrower in `subset`
// (others ignored). Lenders are tried in decreasing budget order and a branch
// dies once the unassigned budget cannot cover the outstanding demand.
class CoverSearch {
 public:
  CoverSearch(const MarketInstance& instance, long step_limit)
      : instance_(instance), step_limit_(step_limit) {
    order_.resize(instance.num_lenders);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return instance.budget[a] > instance.budget[b];
    });
    suffix_budget_.assign(order_.size() + 1, 0.0);
    for (std::size_t i = order_.size(); i-- > 0;) {
      suffix_budget_[i] = suffix_budget_[i + 1] + instance.budget[order_[i]];
    }
  }

  // nullopt when the step limit ran out before a verdict.
  std::optional<bool> coverable(const std::vector<std::size_t>& subset,
                                Assignment* witness = nullptr) {
    subset_ = subset;
    need_.assign(instance_.num_borrowers, 0.0);
    for (const std::size_t b : subset_) need_[b] = instance_.capacity[b];
    choice_.assign(instance_.num_lenders, instance_.num_borrowers);
    steps_ = 0;
    exhausted_ = false;
    const bool found = search(0);
    if (exhausted_) return std::nullopt;
    if (found && witness != nullptr) {
      *witness = Assignment(instance_.num_borrowers, instance_.num_lenders, 0);
      for (std::size_t l = 0; l < instance_.num_lenders; ++l) {
        if (choice_[l] < instance_.num_borrowers) (*witness)(choice_[l], l) = 1;
      }
    }
    return found;
  }

 private:
  bool search(std::size_t depth) {
    if (++steps_ > step_limit_) {
      exhausted_ = true;
      return false;
    }
    double outstanding = 0.0;
    for (const std::size_t b : subset_) outstanding += std::max(0.0, need_[b]);
    if (outstanding <= 0.0) {
      // Float sums can round differently from per-borrower sums; confirm.
      for (const std::size_t b : subset_) {
        if (need_[b] > 0.0) return false;
      }
      return true;
    }
    if (depth == order_.size() || suffix_budget_[depth] < outstanding) return false;
    const std::size_t l = order_[depth];
    const double q = instance_.budget[l];
    for (const std::size_t b : subset_) {
      if (need_[b] <= 0.0) continue;
      const double saved = need_[b];
      need_[b] -= q;
      choice_[l] = b;
      if (search(depth + 1)) return true;
      need_[b] = saved;
      choice_[l] = instance_.num_borrowers;
      if (exhausted_) return false;
    }
    return search(depth + 1);
  }

  const MarketInstance& instance_;
  long step_limit_;
  std::vector<std::size_t> order_;
  std::vector<double> suffix_budget_;
  std::vector<std::size_t> subset_;
  std::vector<double> need_;
  std::vector<std::size_t> choice_;
  long steps_ = 0;
  bool exhausted_ = false;
};

// Deletion filter: shrinks the full borrower set to a minimal subset that
// still cannot be covered. Falls back to the full set if the search budget
// runs out.
inline std::vector<std::size_t> minimal_uncoverable_set(
    const MarketInstance& instance, long step_limit = 2000000) {
  CoverSearch search(instance, step_limit);
  std::vector<std::size_t> subset(instance.num_borrowers);
  std::iota(subset.begin(), subset.end(), std::size_t{0});
  for (std::size_t i = 0; i < subset.size();) {
    std::vector<std::size_t> trial = subset;
    trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
    const std::optional<bool> ok = search.coverable(trial);
    if (ok.has_value() && !*ok) {
      subset = std::move(trial);
    } else {
      ++i;
    }
  }
  return subset;
}

struct Incumbent {
  Assignment x;
  double objective = 0.0;
  bool valid = false;
};

// Shared evaluation context for one solve.
class MatchingProblem {
 public:
  MatchingProblem(const MarketInstance& instance, const Matrix<double>& utility,
                  const ObjectiveWeights& weights)
      : instance_(instance),
        prefs_(index_preferences(instance)),
        utility_(utility),
        weights_(weights) {}

  const MarketInstance& instance() const { return instance_; }
  const PreferenceIndex& prefs() const { return prefs_; }
  const Matrix<double>& utility() const { return utility_; }
  const ObjectiveWeights& weights() const { return weights_; }

  double evaluate(const Assignment& x) const {
    const BlockingPairs w = blocking_pairs(instance_, prefs_, x);
    return objective_value(instance_, x, w.blocking, weights_, utility_);
  }

  // Strictly better objective, or equal objective and lexicographically
  // smaller assignment.
  static bool improves(double objective, const Assignment& x,
                       const Incumbent& incumbent) {
    if (!incumbent.valid) return true;
    if (objective > incumbent.objective) return true;
    return objective == incumbent.objective && lex_less(x, incumbent.x);
  }

  bool offer(const Assignment& x, Incumbent& incumbent) const {
    if (!is_covering(instance_, x)) return false;
    const double value = evaluate(x);
    if (!improves(value, x, incumbent)) return false;
    incumbent.x = x;
    incumbent.objective = value;
    incumbent.valid = true;
    return true;
  }

  Matching finish(const Assignment& x, MatchStatus status) const {
    return make_matching(instance_, prefs_, x, weights_, utility_, status);
  }

 private:
  const MarketInstance& instance_;
  PreferenceIndex prefs_;
  const Matrix<double>& utility_;
  ObjectiveWeights weights_;
};

// First-improvement single-lender moves (reassign or unmatch) that keep
// every borrower covered. Deterministic scan order.
inline void local_search(const MatchingProblem& problem, Incumbent& current,
                         int max_passes = 200) {
  if (!current.valid) return;
  const MarketInstance& instance = problem.instance();
  const std::size_t k = instance.num_borrowers;
  const std::size_t n = instance.num_lenders;
  std::vector<double> funded(k, 0.0);
  auto recompute_funding = [&]() {
    std::fill(funded.begin(), funded.end(), 0.0);
    for (std::size_t b = 0; b < k; ++b) {
      for (std::size_t l = 0; l < n; ++l) {
        if (current.x(b, l)) funded[b] += instance.budget[l];
      }
    }
  };
  recompute_funding();
  for (int pass = 0; pass < max_passes; ++pass) {
    bool improved = false;
    for (std::size_t l = 0; l < n; ++l) {
      std::size_t from = k;
      for (std::size_t b = 0; b < k; ++b) {
        if (current.x(b, l)) from = b;
      }
      if (from < k && !(funded[from] - instance.budget[l] >= instance.capacity[from])) {
        continue;  // l is needed where it is
      }
      for (std::size_t to = 0; to <= k; ++to) {
        if (to == from) continue;
        Assignment trial = current.x;
        if (from < k) trial(from, l) = 0;
        if (to < k) trial(to, l) = 1;
        if (!is_covering(instance, trial)) continue;
        const double value = problem.evaluate(trial);
        if (value > current.objective) {
          current.x = std::move(trial);
          current.objective = value;
          recompute_funding();
          improved = true;
          break;
        }
      }
    }
    if (!improved) break;
  }
}

inline constexpr std::int8_t kFree = -1;

// One LP covers the whole tree: x columns at b*N + l, w columns after them.
// A node tightens x bounds on a copy of its parent's optimal simplex and
// reoptimizes with the dual simplex. Snapshots are shared by both children
// and dropped when neither needs them; past a memory cap children start
// from scratch instead.
class BranchAndBound {
 public:
  BranchAndBound(const MatchingProblem& problem, const SolverOptions& options)
      : problem_(problem),
        instance_(problem.instance()),
        options_(options),
        k_(instance_.num_borrowers),
        n_(instance_.num_lenders) {
    build_program();
    lp_options_.pivot_tolerance = options_.pivot_tolerance;
  }

  Incumbent& incumbent() { return incumbent_; }
  const SolveStats& stats() const { return stats_; }

  // Returns false when the search proved that no covering assignment exists.
  bool run() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::int8_t> root(k_ * n_, kFree);
    push(std::move(root), std::numeric_limits<double>::infinity(), nullptr);

    while (!open_.empty()) {
      Node node = std::move(const_cast<Node&>(open_.top()));
      open_.pop();
      if (prunable(node.parent_bound, node.fix)) continue;

      if (++stats_.nodes > options_.node_limit) {
        throw Error(ErrorCode::kNodeLimitExceeded,
                    "branch-and-bound exceeded " + std::to_string(options_.node_limit) +
                        " nodes");
      }
      if (options_.time_budget_seconds > 0.0) {
        const std::chrono::duration<double> elapsed =
            std::chrono::steady_clock::now() - start;
        if (elapsed.count() > options_.time_budget_seconds) {
          throw Error(ErrorCode::kTimeLimitExceeded, "branch-and-bound time budget spent");
        }
      }
      process(std::move(node.fix), std::move(node.warm));
    }
    return incumbent_.valid;
  }

 private:
  using Snapshot = std::shared_ptr<const lp::DenseSimplex>;

  struct Node {
    double parent_bound;
    std::uint64_t id;
    std::vector<std::int8_t> fix;
    Snapshot warm;
  };
  struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
      if (a.parent_bound != b.parent_bound) return a.parent_bound < b.parent_bound;
      return a.id > b.id;
    }
  };

  static constexpr std::size_t kSnapshotBytes = std::size_t{512} << 20;

  std::size_t pos(std::size_t b, std::size_t l) const { return b * n_ + l; }

  // Stability rows are divided by c_b, and the lender-side coefficient
  // becomes 1 if q_l >= c_b and 0 otherwise.
  void build_program() {
    const auto& prefs = problem_.prefs();
    const double lambda1 = problem_.weights().lambda1;
    const double lambda2 = problem_.weights().lambda2;
    const Matrix<double>& utility = problem_.utility();
    for (std::size_t b = 0; b < k_; ++b) {
      for (std::size_t l = 0; l < n_; ++l) {
        program_.add_column(lambda1 * utility(l, b), 0.0, 1.0);
      }
    }
    for (std::size_t p = 0; p < k_ * n_; ++p) program_.add_column(-lambda2, 0.0, 1.0);

    if (k_ > 1) {
      for (std::size_t l = 0; l < n_; ++l) {
        std::vector<lp::Term> terms;
        for (std::size_t b = 0; b < k_; ++b) terms.push_back({pos(b, l), 1.0});
        program_.add_row(std::move(terms), lp::RowSense::kLessEqual, 1.0);
      }
    }
    for (std::size_t b = 0; b < k_; ++b) {
      std::vector<lp::Term> terms;
      for (std::size_t l = 0; l < n_; ++l) terms.push_back({pos(b, l), instance_.budget[l]});
      program_.add_row(std::move(terms), lp::RowSense::kGreaterEqual, instance_.capacity[b]);
    }
    for (std::size_t b = 0; b < k_; ++b) {
      const double c = instance_.capacity[b];
      for (std::size_t l = 0; l < n_; ++l) {
        std::vector<lp::Term> terms{{pos(b, l), 1.0}};
        const std::size_t rank_l = prefs.borrower_rank(b, l);
        for (std::size_t r = 0; r < rank_l; ++r) {
          terms.push_back({pos(b, prefs.lists.borrower[b][r]), 1.0});
        }
        if (instance_.budget[l] >= c) {
          const std::size_t rank_b = prefs.lender_rank(l, b);
          for (std::size_t r = 0; r < rank_b; ++r) {
            terms.push_back({pos(prefs.lists.lender[l][r], l), 1.0});
          }
        }
        terms.push_back({k_ * n_ + pos(b, l), 1.0});
        program_.add_row(std::move(terms), lp::RowSense::kGreaterEqual, 1.0);
      }
    }
  }

  void push(std::vector<std::int8_t> fix, double bound, Snapshot warm) {
    open_.push(Node{bound, next_id_++, std::move(fix), std::move(warm)});
  }

  double tolerance() const {
    return 1e-9 * std::max(1.0, std::abs(incumbent_.objective));
  }

  // True when some assignment consistent with `fix` precedes the incumbent
  // lexicographically (ignoring the covering constraints).
  bool may_hold_lex_smaller(const std::vector<std::int8_t>& fix) const {
    const auto& inc = incumbent_.x.data();
    for (std::size_t p = 0; p < fix.size(); ++p) {
      if (inc[p] == 1 && fix[p] != 1) return true;
      if (fix[p] != kFree && fix[p] != static_cast<std::int8_t>(inc[p])) return false;
    }
    return false;
  }

  bool prunable(double bound, const std::vector<std::int8_t>& fix) const {
    if (!incumbent_.valid) return false;
    const double tol = tolerance();
    if (bound < incumbent_.objective - tol) return true;
    return bound <= incumbent_.objective + tol && !may_hold_lex_smaller(fix);
  }

  // Fixing x_bl = 1 removes lender l from every other borrower.
  void fix_one(std::vector<std::int8_t>& fix, std::size_t b, std::size_t l) const {
    for (std::size_t other = 0; other < k_; ++other) fix[pos(other, l)] = 0;
    fix[pos(b, l)] = 1;
  }

  // Children share the parent's optimal simplex until the snapshot cap is
  // reached; past it they solve from scratch.
  Snapshot share(lp::DenseSimplex&& simplex) {
    if (live_snapshot_bytes_ + snapshot_size_ > kSnapshotBytes) return nullptr;
    live_snapshot_bytes_ += snapshot_size_;
    std::size_t* counter = &live_snapshot_bytes_;
    const std::size_t size = snapshot_size_;
    return Snapshot(new lp::DenseSimplex(std::move(simplex)),
                    [counter, size](const lp::DenseSimplex* s) {
                      *counter -= size;
                      delete s;
                    });
  }

  // Drops x values that cannot reach the incumbent: with the LP at bound z,
  // any point with x_j moved off its bound is worth at most z - |d_j|.
  void reduced_cost_fixing(const lp::DenseSimplex& simplex, double bound,
                           std::vector<std::int8_t>& fix) const {
    if (!incumbent_.valid) return;
    const double floor = incumbent_.objective - 2.0 * tolerance();
    for (std::size_t p = 0; p < k_ * n_; ++p) {
      if (fix[p] != kFree || simplex.is_basic(p)) continue;
      const double d = simplex.reduced_cost(p);
      if (!simplex.at_upper(p)) {
        if (bound + d < floor) fix[p] = 0;
      } else if (bound - d < floor) {
        fix_one(fix, p / n_, p % n_);
      }
    }
  }

  static std::pair<double, double> box(std::int8_t f) {
    if (f == kFree) return {0.0, 1.0};
    return {static_cast<double>(f), static_cast<double>(f)};
  }

  // Cold solve with the node's bounds baked into the program.
  lp::DenseSimplex cold_solve(const std::vector<std::int8_t>& fix, lp::LpStatus& status) {
    lp::LinearProgram program = program_;
    for (std::size_t p = 0; p < fix.size(); ++p) {
      const auto [lo, hi] = box(fix[p]);
      program.set_bounds(p, lo, hi);
    }
    lp::DenseSimplex simplex(program, lp_options_);
    status = simplex.solve();
    return simplex;
  }

  void process(std::vector<std::int8_t> fix, Snapshot warm) {
    // Quick cover check before touching the LP.
    for (std::size_t b = 0; b < k_; ++b) {
      double reachable = 0.0;
      for (std::size_t l = 0; l < n_; ++l) {
        if (fix[pos(b, l)] != 0) reachable += instance_.budget[l];
      }
      if (reachable < instance_.capacity[b]) return;
    }

    lp::LpStatus status = lp::LpStatus::kIterationLimit;
    std::optional<lp::DenseSimplex> simplex;
    if (warm) {
      simplex.emplace(*warm);
      warm.reset();
      for (std::size_t p = 0; p < fix.size(); ++p) {
        const auto [lo, hi] = box(fix[p]);
        simplex->set_bounds(p, lo, hi);
      }
      const long before = simplex->iterations();
      status = simplex->reoptimize();
      stats_.lp_iterations += simplex->iterations() - before;
    }
    if (status != lp::LpStatus::kOptimal && status != lp::LpStatus::kInfeasible) {
      simplex.emplace(cold_solve(fix, status));
      stats_.lp_iterations += simplex->iterations();
    }
    if (status == lp::LpStatus::kInfeasible) return;
    if (status != lp::LpStatus::kOptimal) {
      throw Error(ErrorCode::kInvalidArgument, "LP relaxation did not reach optimality");
    }
    if (snapshot_size_ == 0) snapshot_size_ = simplex->footprint();

    const double bound = simplex->objective();
    if (prunable(bound, fix)) return;
    const std::vector<double> values = simplex->values();
    reduced_cost_fixing(*simplex, bound, fix);

    // Most fractional free x; ties to the first position.
    const double eps = options_.integrality_tolerance;
    std::size_t branch_at = SIZE_MAX;
    std::size_t first_free = SIZE_MAX;
    double closest = 0.5 - eps;
    Assignment rounded(k_, n_, 0);
    for (std::size_t p = 0; p < k_ * n_; ++p) {
      if (fix[p] == 1) rounded.data()[p] = 1;
      if (fix[p] != kFree) continue;
      if (first_free == SIZE_MAX) first_free = p;
      const double v = values[p];
      if (v >= 1.0 - eps) rounded.data()[p] = 1;
      if (std::abs(v - 0.5) < closest) {
        closest = std::abs(v - 0.5);
        branch_at = p;
      }
    }

    if (branch_at == SIZE_MAX) {
      problem_.offer(rounded, incumbent_);
      if (prunable(bound, fix)) return;
      // Ties (or rounding trouble) may still hide a better or lex-smaller
      // point here; split on the first free position.
      if (first_free == SIZE_MAX) return;
      branch_at = first_free;
    }
    std::vector<std::int8_t> up = fix;
    fix_one(up, branch_at / n_, branch_at % n_);
    fix[branch_at] = 0;
    warm = share(std::move(*simplex));
    push(std::move(fix), bound, warm);
    push(std::move(up), bound, std::move(warm));
  }

  const MatchingProblem& problem_;
  const MarketInstance& instance_;
  SolverOptions options_;
  std::size_t k_;
  std::size_t n_;
  lp::LinearProgram program_;
  lp::LpOptions lp_options_;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open_;
  std::uint64_t next_id_ = 0;
  std::size_t snapshot_size_ = 0;
  std::size_t live_snapshot_bytes_ = 0;
  Incumbent incumbent_;
  SolveStats stats_;
};

// Depth-first search over anchors, then over the remaining lenders. See the
// file comment for the bounds.
class AnchorSearch {
 public:
  AnchorSearch(const MatchingProblem& problem, const SolverOptions& options)
      : problem_(problem),
        instance_(problem.instance()),
        prefs_(problem.prefs()),
        options_(options),
        k_(instance_.num_borrowers),
        n_(instance_.num_lenders),
        unset_(k_ + 1),
        lambda2_(problem.weights().lambda2) {
    const double lambda1 = problem.weights().lambda1;
    gain_.resize(n_ * k_);
    big_.resize(n_ * k_);
    for (std::size_t l = 0; l < n_; ++l) {
      for (std::size_t b = 0; b < k_; ++b) {
        gain_[l * k_ + b] = lambda1 * problem.utility()(l, b);
        big_[l * k_ + b] = instance_.budget[l] >= instance_.capacity[b];
      }
    }
    rescues_.assign(n_ * k_, 0);
    excluded_.assign(n_ * k_, 0);
    choice_.assign(n_, unset_);
    anchor_.assign(k_, n_);
    ones_.assign(k_ * n_, 0);
    zeros_.assign(k_ * n_, 0);
    short_.resize(k_);
    top_.resize(n_);
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return instance_.budget[a] > instance_.budget[b];
    });
  }

  Incumbent& incumbent() { return incumbent_; }
  const SolveStats& stats() const { return stats_; }

  void run() {
    start_ = std::chrono::steady_clock::now();
    anchors(0, std::vector<double>(k_, 0.0));
  }

 private:
  static constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

  struct Child {
    double bound;
    std::size_t pick;
    std::vector<double> mu;
  };

  double tolerance() const {
    return 1e-9 * std::max(1.0, std::abs(incumbent_.objective));
  }

  bool prunable(double bound) const {
    if (!incumbent_.valid) return bound == kMinusInf;
    const double tol = tolerance();
    if (bound < incumbent_.objective - tol) return true;
    return bound <= incumbent_.objective + tol && !may_hold_lex_smaller();
  }

  bool may_hold_lex_smaller() const {
    const auto& inc = incumbent_.x.data();
    for (std::size_t p = 0; p < k_ * n_; ++p) {
      if (ones_[p] > 0) {
        if (inc[p] == 0) return false;
      } else if (inc[p] == 1) {
        return true;
      }
    }
    return false;
  }

  void count_node() {
    if (++stats_.nodes > options_.node_limit) {
      throw Error(ErrorCode::kNodeLimitExceeded,
                  "search exceeded " + std::to_string(options_.node_limit) + " nodes");
    }
    if (options_.time_budget_seconds > 0.0 && stats_.nodes % 1024 == 0) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
      if (elapsed.count() > options_.time_budget_seconds) {
        throw Error(ErrorCode::kTimeLimitExceeded, "search time budget spent");
      }
    }
  }

  double value(std::size_t l, std::size_t b) const {
    return gain_[l * k_ + b] + lambda2_ * static_cast<double>(rescues_[l * k_ + b]);
  }

  bool allowed(std::size_t l, std::size_t b) const { return excluded_[l * k_ + b] == 0; }

  // l is placed so that it cannot block b: budget enough and matched (or,
  // while still free, able to be matched) to a borrower it prefers.
  bool rescuable(std::size_t l, std::size_t b) const {
    if (!big_[l * k_ + b]) return false;
    const std::size_t s = choice_[l];
    if (s == k_) return false;
    if (s == unset_) return prefs_.lender_rank(l, b) > 0;
    return prefs_.lender_rank(l, s) < prefs_.lender_rank(l, b);
  }

  // Fewest blocking pairs b can end up with given the decisions so far.
  std::size_t min_blocking(std::size_t b) const {
    std::size_t count = 0;
    for (const std::size_t l : prefs_.lists.borrower[b]) {
      if (choice_[l] == unset_ || choice_[l] == b) break;
      if (!rescuable(l, b)) ++count;
    }
    return count;
  }

  void mark(std::size_t l, std::size_t b, int delta) {
    for (std::size_t o = 0; o < k_; ++o) {
      if (o == b) {
        ones_[o * n_ + l] += delta;
      } else {
        zeros_[o * n_ + l] += delta;
      }
    }
  }

  // Makes the lender at `rank` in b's list the anchor of b (delta = +1) or
  // undoes it (delta = -1).
  void anchor(std::size_t b, std::size_t rank, int delta) {
    const std::size_t l = prefs_.lists.borrower[b][rank];
    if (delta > 0) {
      anchor_[b] = l;
      choice_[l] = b;
      blocked_ += rank;
    } else {
      anchor_[b] = n_;
      choice_[l] = unset_;
      blocked_ -= rank;
    }
    mark(l, b, delta);
    for (std::size_t r = 0; r < rank; ++r) {
      const std::size_t above = prefs_.lists.borrower[b][r];
      excluded_[above * k_ + b] += delta;
      zeros_[b * n_ + above] += delta;
      if (!big_[above * k_ + b]) continue;
      const auto& list = prefs_.lists.lender[above];
      for (std::size_t s = 0; s < prefs_.lender_rank(above, b); ++s) {
        rescues_[above * k_ + list[s]] += delta;
      }
    }
  }

  // Every free lender at its best allowed option, less the cheapest move
  // giving each short borrower one more lender.
  double greedy() {
    double total = 0.0;
    for (std::size_t b = 0; b < k_; ++b) short_[b] = instance_.capacity[b];
    for (std::size_t l = 0; l < n_; ++l) {
      const std::size_t s = choice_[l];
      if (s == unset_) {
        double best = 0.0;
        for (std::size_t b = 0; b < k_; ++b) {
          if (allowed(l, b)) best = std::max(best, value(l, b));
        }
        top_[l] = best;
        total += best;
      } else if (s < k_) {
        total += value(l, s);
        short_[s] -= instance_.budget[l];
      }
    }
    for (std::size_t b = 0; b < k_; ++b) {
      if (!(short_[b] > 0.0)) continue;
      double cheapest = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < n_; ++l) {
        if (choice_[l] == unset_ && allowed(l, b)) {
          cheapest = std::min(cheapest, top_[l] - value(l, b));
        }
      }
      total -= cheapest;
    }
    return total;
  }

  // max_x sum v x + sum_b mu_b (sum_l q_l x_bl - c_b) over x with each lender
  // on at most one allowed borrower; an upper bound for any mu >= 0. mu is
  // improved in place by exact coordinate descent.
  double lagrangian(std::vector<double>& mu) {
    double fixed = 0.0;
    slope_.assign(k_, 0.0);
    budgets_.clear();
    table_.clear();
    for (std::size_t b = 0; b < k_; ++b) slope_[b] = -instance_.capacity[b];
    for (std::size_t l = 0; l < n_; ++l) {
      const std::size_t s = choice_[l];
      if (s == unset_) {
        budgets_.push_back(instance_.budget[l]);
        for (std::size_t b = 0; b < k_; ++b) {
          table_.push_back(allowed(l, b) ? value(l, b) : kMinusInf);
        }
      } else if (s < k_) {
        fixed += value(l, s);
        slope_[s] += instance_.budget[l];
      }
    }
    const std::size_t m = budgets_.size();
    for (int sweep = 0; sweep < 4; ++sweep) {
      bool changed = false;
      for (std::size_t b = 0; b < k_; ++b) {
        // The dual is convex piecewise linear in mu_b; lender i joins b once
        // mu_b passes its kink.
        double slope = slope_[b];
        kinks_.clear();
        for (std::size_t i = 0; i < m; ++i) {
          const double* row = &table_[i * k_];
          if (row[b] == kMinusInf) continue;
          const double q = budgets_[i];
          double other = 0.0;
          for (std::size_t s = 0; s < k_; ++s) {
            if (s != b) other = std::max(other, row[s] + mu[s] * q);
          }
          const double kink = (other - row[b]) / q;
          if (kink <= 0.0) {
            slope += q;
          } else {
            kinks_.emplace_back(kink, q);
          }
        }
        double next = 0.0;
        if (slope < 0.0) {
          std::sort(kinks_.begin(), kinks_.end());
          next = -1.0;
          for (const auto& [kink, q] : kinks_) {
            slope += q;
            if (slope >= 0.0) {
              next = kink;
              break;
            }
          }
          if (next < 0.0) return kMinusInf;  // b cannot be covered
        }
        if (next != mu[b]) changed = true;
        mu[b] = next;
      }
      if (!changed) break;
    }
    double total = fixed;
    for (std::size_t b = 0; b < k_; ++b) total += mu[b] * slope_[b];
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = &table_[i * k_];
      double best = 0.0;
      for (std::size_t s = 0; s < k_; ++s) best = std::max(best, row[s] + mu[s] * budgets_[i]);
      total += best;
    }
    return total;
  }

  double bound(std::vector<double>& mu) {
    std::size_t blocked = blocked_;
    for (std::size_t b = 0; b < k_; ++b) {
      if (anchor_[b] == n_) blocked += min_blocking(b);
    }
    const double penalty = lambda2_ * static_cast<double>(blocked);
    const double quick = greedy() - penalty;
    if (prunable(quick)) return quick;
    return std::min(quick, lagrangian(mu) - penalty);
  }

  static void order_children(std::vector<Child>& children) {
    std::stable_sort(children.begin(), children.end(),
                     [](const Child& a, const Child& b) { return a.bound > b.bound; });
  }

  void anchors(std::size_t b, const std::vector<double>& mu) {
    count_node();
    if (b == k_) {
      lenders(0, mu);
      return;
    }
    const auto& list = prefs_.lists.borrower[b];
    // Budget still free at or below each rank: an anchor needs enough of it.
    std::vector<double> below(n_ + 1, 0.0);
    for (std::size_t r = n_; r-- > 0;) {
      below[r] = below[r + 1] + (choice_[list[r]] == unset_ ? instance_.budget[list[r]] : 0.0);
    }
    std::vector<Child> children;
    for (std::size_t r = 0; r < n_ && below[r] >= instance_.capacity[b]; ++r) {
      if (choice_[list[r]] != unset_) continue;
      anchor(b, r, +1);
      std::vector<double> child_mu = mu;
      const double child_bound = bound(child_mu);
      if (!prunable(child_bound)) children.push_back({child_bound, r, std::move(child_mu)});
      anchor(b, r, -1);
    }
    order_children(children);
    for (const Child& child : children) {
      if (prunable(child.bound)) continue;
      anchor(b, child.pick, +1);
      anchors(b + 1, child.mu);
      anchor(b, child.pick, -1);
    }
  }

  void lenders(std::size_t depth, const std::vector<double>& mu) {
    while (depth < n_ && choice_[order_[depth]] != unset_) ++depth;
    if (depth == n_) {
      Assignment x(k_, n_, 0);
      for (std::size_t l = 0; l < n_; ++l) {
        if (choice_[l] < k_) x(choice_[l], l) = 1;
      }
      problem_.offer(x, incumbent_);
      return;
    }
    count_node();
    const std::size_t l = order_[depth];
    std::vector<Child> children;
    for (std::size_t b = 0; b <= k_; ++b) {
      if (b < k_ && !allowed(l, b)) continue;
      choice_[l] = b;
      mark(l, b, +1);
      std::vector<double> child_mu = mu;
      const double child_bound = bound(child_mu);
      if (!prunable(child_bound)) children.push_back({child_bound, b, std::move(child_mu)});
      mark(l, b, -1);
      choice_[l] = unset_;
    }
    order_children(children);
    for (const Child& child : children) {
      if (prunable(child.bound)) continue;
      choice_[l] = child.pick;
      mark(l, child.pick, +1);
      lenders(depth + 1, child.mu);
      mark(l, child.pick, -1);
      choice_[l] = unset_;
    }
  }

  const MatchingProblem& problem_;
  const MarketInstance& instance_;
  const PreferenceIndex& prefs_;
  SolverOptions options_;
  std::size_t k_;
  std::size_t n_;
  std::size_t unset_;  // choice_ value of an undecided lender; k_ = unmatched
  double lambda2_;
  std::vector<double> gain_;         // lambda1 u(l, b), at l * k_ + b
  std::vector<std::uint8_t> big_;    // q_l >= c_b
  std::vector<int> rescues_;         // pairs l would rescue by taking b
  std::vector<int> excluded_;        // l ranks above b's anchor
  std::vector<std::size_t> choice_;
  std::vector<std::size_t> anchor_;  // n_ = undecided
  std::vector<int> ones_;            // fixed x, at b * n_ + l
  std::vector<int> zeros_;
  std::vector<std::size_t> order_;
  std::size_t blocked_ = 0;
  std::vector<double> short_;
  std::vector<double> top_;
  std::vector<double> slope_;
  std::vector<double> budgets_;
  std::vector<double> table_;
  std::vector<std::pair<double, double>> kinks_;
  Incumbent incumbent_;
  SolveStats stats_;
  std::chrono::steady_clock::time_point start_;
};

inline Matching infeasible_matching(const MatchingProblem& problem,
                                    const SolveStats& stats) {
  const MarketInstance& instance = problem.instance();
  Matching m = problem.finish(Assignment(instance.num_borrowers, instance.num_lenders, 0),
                              MatchStatus::kInfeasible);
  m.uncoverable_borrowers = minimal_uncoverable_set(instance);
  m.stats = stats;
  return m;
}

inline Matching solve_heuristic(const MatchingProblem& problem,
                                const Assignment* hint) {
  const MarketInstance& instance = problem.instance();
  Incumbent current;
  problem.offer(deferred_acceptance(instance, problem.prefs()), current);
  if (hint != nullptr) problem.offer(*hint, current);
  if (!current.valid) {
    CoverSearch search(instance, 2000000);
    std::vector<std::size_t> all(instance.num_borrowers);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Assignment witness;
    const std::optional<bool> found = search.coverable(all, &witness);
    if (!found.has_value()) {
      throw Error(ErrorCode::kNodeLimitExceeded,
                  "heuristic could not find a covering assignment");
    }
    if (!*found) return infeasible_matching(problem, {});
    problem.offer(witness, current);
  }
  local_search(problem, current);
  return problem.finish(current.x, MatchStatus::kHeuristic);
}

inline Matching solve_by_anchors(const MatchingProblem& problem, const SolverOptions& options,
                                 const Assignment* hint) {
  const MarketInstance& instance = problem.instance();
  AnchorSearch search(problem, options);
  Incumbent& start = search.incumbent();
  problem.offer(deferred_acceptance(instance, problem.prefs()), start);
  if (hint != nullptr) problem.offer(*hint, start);
  if (!start.valid) {
    CoverSearch cover(instance, 2000000);
    std::vector<std::size_t> all(instance.num_borrowers);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Assignment witness;
    const auto coverable = cover.coverable(all, &witness);
    if (coverable.has_value() && !*coverable) return infeasible_matching(problem, search.stats());
    if (coverable.has_value()) problem.offer(witness, start);
  }
  search.run();
  if (!search.incumbent().valid) return infeasible_matching(problem, search.stats());
  Matching m = problem.finish(search.incumbent().x, MatchStatus::kOptimal);
  m.stats = search.stats();
  return m;
}

inline Matching solve(const MarketInstance& instance, const Matrix<double>& utility,
                      const ObjectiveWeights& weights, const SolverOptions& options,
                      const Assignment* hint) {
  check_weights(weights);
  check_solver_options(options);
  if (hint != nullptr) check_assignment(instance, *hint);
  const MatchingProblem problem(instance, utility, weights);
  if (options.mode == SolveMode::kHeuristic) return solve_heuristic(problem, hint);
  if (options.algorithm == ExactAlgorithm::kAnchorSearch) {
    return solve_by_anchors(problem, options, hint);
  }

  BranchAndBound search(problem, options);
  Incumbent& start = search.incumbent();
  problem.offer(deferred_acceptance(instance, problem.prefs()), start);
  local_search(problem, start);
  if (hint != nullptr) {
    Incumbent from_hint;
    if (problem.offer(*hint, from_hint)) {
      local_search(problem, from_hint);
      if (MatchingProblem::improves(from_hint.objective, from_hint.x, start)) {
        start = from_hint;
      }
    }
  }
  if (!search.run()) return infeasible_matching(problem, search.stats());
  Matching m = problem.finish(search.incumbent().x, MatchStatus::kOptimal);
  m.stats = search.stats();
  return m;
}

}  // namespace internal

// Solves the stable matching program. When `lender_utility_override` is set
// it replaces u_l both in the objective and in the lenders' preference
// orders; borrower preferences always come from the instance. `hint` is an
// optional starting assignment (e.g. the previous round's matching) and never
// changes the result of an exact solve.
inline Matching solve_matching(
    const MarketInstance& instance, const ObjectiveWeights& weights,
    const std::optional<Matrix<double>>& lender_utility_override,
    const SolverOptions& options = {}, const Assignment* hint = nullptr) {
  if (lender_utility_override.has_value()) {
    const MarketInstance effective =
        with_lender_utility(instance, *lender_utility_override);
    return internal::solve(effective, effective.lender_utility, weights, options, hint);
  }
  return internal::solve(instance, instance.lender_utility, weights, options, hint);
}

// Same program with u_bl = u_b(l) + u_l(b) in the objective: the hindsight
// baseline used for regret.
inline Matching solve_optimal_combined(const MarketInstance& instance,
                                       const ObjectiveWeights& weights,
                                       const SolverOptions& options = {}) {
  const Matrix<double> combined = combined_utility(instance);
  return internal::solve(instance, combined, weights, options, nullptr);
}

}  // namespace p2pmatch

#endif  // P2PMATCH_SOLVER_HPP_
