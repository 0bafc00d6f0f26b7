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

// Market model: borrowers with requested amounts, lenders with budgets, and
// the two utility matrices that induce strict preference orders.

#ifndef P2PMATCH_MARKET_HPP_
#define P2PMATCH_MARKET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "p2pmatch/common.hpp"
#include "p2pmatch/random.hpp"

namespace p2pmatch {

struct MarketInstance {
  std::size_t num_borrowers = 0;  // K
  std::size_t num_lenders = 0;    // N
  std::vector<double> capacity;   // c_b, one per borrower
  std::vector<double> budget;     // q_l, one per lender
  Matrix<double> lender_utility;    // N x K, entry (l, b) = u_l(b)
  Matrix<double> borrower_utility;  // K x N, entry (b, l) = u_b(l)

  friend bool operator==(const MarketInstance&,
                         const MarketInstance&) = default;
};

// The same market with the lender-side utilities replaced. This is how the
// bandit loop hands its optimistic estimates to the solver.
inline MarketInstance with_lender_utility(const MarketInstance& instance,
                                          Matrix<double> lender_utility) {
  if (!lender_utility.same_shape(instance.num_lenders,
                                 instance.num_borrowers)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "lender utility override must be lenders x borrowers");
  }
  MarketInstance out = instance;
  out.lender_utility = std::move(lender_utility);
  return out;
}

// u_bl = u_b(l) + u_l(b), laid out like the lender utility (lender x borrower).
inline Matrix<double> combined_utility(const MarketInstance& instance) {
  Matrix<double> out(instance.num_lenders, instance.num_borrowers);
  for (std::size_t l = 0; l < instance.num_lenders; ++l) {
    for (std::size_t b = 0; b < instance.num_borrowers; ++b) {
      out(l, b) = instance.borrower_utility(b, l) + instance.lender_utility(l, b);
    }
  }
  return out;
}

struct GenerationConfig {
  std::size_t num_borrowers = 20;
  std::size_t num_lenders = 60;
  double capacity_min = 5.0;
  double capacity_max = 40.0;
  double budget_min = 1.0;
  double budget_max = 10.0;
  double utility_min = 0.0;
  double utility_max = 1.0;
  // Draw capacities and budgets as integers in range instead of reals.
  bool integer_amounts = false;
  int max_attempts = 10000;
  std::uint64_t seed = 1;
};

inline void check_generation_config(const GenerationConfig& config) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidValue, what);
  };
  if (config.num_borrowers < 1) fail("num_borrowers must be >= 1");
  if (config.num_lenders < 1) fail("num_lenders must be >= 1");
  if (!(config.capacity_min > 0.0)) fail("capacity_min must be > 0");
  if (!(config.budget_min > 0.0)) fail("budget_min must be > 0");
  if (!(config.capacity_min <= config.capacity_max)) {
    fail("capacity range is empty");
  }
  if (!(config.budget_min <= config.budget_max)) fail("budget range is empty");
  if (!(config.utility_min < config.utility_max)) {
    fail("utility range must have positive width");
  }
  if (config.max_attempts < 1) fail("max_attempts must be >= 1");
  if (config.integer_amounts &&
      (std::ceil(config.capacity_min) > std::floor(config.capacity_max) ||
       std::ceil(config.budget_min) > std::floor(config.budget_max))) {
    fail("integer amounts requested but a range holds no integer");
  }
}

namespace internal {

inline double draw_amount(Rng& rng, double lo, double hi, bool integral) {
  if (integral) {
    return static_cast<double>(rng.uniform_int(
        static_cast<std::int64_t>(std::ceil(lo)),
        static_cast<std::int64_t>(std::floor(hi))));
  }
  return lo == hi ? lo : rng.uniform(lo, hi);
}

// Fills a row with i.i.d. uniform draws; any entry equal to an earlier one
// is redrawn until the row is strictly ordered.
inline void draw_strict_row(Rng& rng, std::span<double> row, double lo,
                            double hi) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    row[i] = rng.uniform(lo, hi);
  }
  for (std::size_t i = 1; i < row.size(); ++i) {
    int redraws = 0;
    while (std::find(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(i),
                     row[i]) != row.begin() + static_cast<std::ptrdiff_t>(i)) {
      if (++redraws > 1000) {
        throw Error(ErrorCode::kAttemptCapExceeded,
                    "could not draw distinct utilities; range too narrow");
      }
      row[i] = rng.uniform(lo, hi);
    }
  }
}

}  // namespace internal

// Samples a market. Capacities and budgets are redrawn until the aggregate
// condition sum(c) <= sum(q) holds; utilities are drawn afterwards.
inline MarketInstance generate_instance(const GenerationConfig& config) {
  check_generation_config(config);
  const std::size_t k = config.num_borrowers;
  const std::size_t n = config.num_lenders;
  Rng rng(config.seed);

  MarketInstance instance;
  instance.num_borrowers = k;
  instance.num_lenders = n;
  instance.capacity.resize(k);
  instance.budget.resize(n);

  bool feasible = false;
  for (int attempt = 0; attempt < config.max_attempts && !feasible; ++attempt) {
    for (double& c : instance.capacity) {
      c = internal::draw_amount(rng, config.capacity_min, config.capacity_max,
                                config.integer_amounts);
    }
    for (double& q : instance.budget) {
      q = internal::draw_amount(rng, config.budget_min, config.budget_max,
                                config.integer_amounts);
    }
    const double demand =
        std::accumulate(instance.capacity.begin(), instance.capacity.end(), 0.0);
    const double supply =
        std::accumulate(instance.budget.begin(), instance.budget.end(), 0.0);
    feasible = demand <= supply;
  }
  if (!feasible) {
    throw Error(ErrorCode::kAttemptCapExceeded,
                "no draw satisfied sum(capacity) <= sum(budget) within " +
                    std::to_string(config.max_attempts) + " attempts");
  }

  instance.lender_utility = Matrix<double>(n, k);
  for (std::size_t l = 0; l < n; ++l) {
    internal::draw_strict_row(rng, instance.lender_utility.row(l),
                              config.utility_min, config.utility_max);
  }
  instance.borrower_utility = Matrix<double>(k, n);
  for (std::size_t b = 0; b < k; ++b) {
    internal::draw_strict_row(rng, instance.borrower_utility.row(b),
                              config.utility_min, config.utility_max);
  }
  return instance;
}

// Ordered lists of the opposite side, most preferred first.
struct PreferenceLists {
  std::vector<std::vector<std::size_t>> lender;    // per lender: borrowers
  std::vector<std::vector<std::size_t>> borrower;  // per borrower: lenders
};

namespace internal {

inline std::vector<std::size_t> order_row(std::span<const double> row,
                                          const char* side, std::size_t agent) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return row[a] > row[b] || (row[a] == row[b] && a < b);
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!(row[order[i - 1]] > row[order[i]])) {
      throw Error(ErrorCode::kTiedUtilities,
                  std::string(side) + " " + std::to_string(agent) +
                      " has tied utilities");
    }
  }
  return order;
}

}  // namespace internal

inline PreferenceLists preferences_from_utilities(
    const MarketInstance& instance) {
  PreferenceLists prefs;
  prefs.lender.reserve(instance.num_lenders);
  for (std::size_t l = 0; l < instance.num_lenders; ++l) {
    prefs.lender.push_back(
        internal::order_row(instance.lender_utility.row(l), "lender", l));
  }
  prefs.borrower.reserve(instance.num_borrowers);
  for (std::size_t b = 0; b < instance.num_borrowers; ++b) {
    prefs.borrower.push_back(
        internal::order_row(instance.borrower_utility.row(b), "borrower", b));
  }
  return prefs;
}

enum class FindingKind {
  kDimensionMismatch,
  kTiedUtilities,
  kAggregateInfeasible,
  kOutOfRange,
};

struct Finding {
  FindingKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> violations;
  // Advisory only; e.g. the market is not borrower-scarce (K << N).
  std::vector<std::string> warnings;

  bool ok() const noexcept { return violations.empty(); }
  bool has(FindingKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const Finding& f) { return f.kind == kind; });
  }
};

inline ValidationReport validate_instance(const MarketInstance& instance) {
  ValidationReport report;
  auto add = [&report](FindingKind kind, std::string message) {
    report.violations.push_back({kind, std::move(message)});
  };
  const std::size_t k = instance.num_borrowers;
  const std::size_t n = instance.num_lenders;

  if (k == 0 || n == 0) {
    add(FindingKind::kDimensionMismatch, "market needs at least one agent per side");
  }
  if (instance.capacity.size() != k) {
    add(FindingKind::kDimensionMismatch, "capacity has " +
        std::to_string(instance.capacity.size()) + " entries, expected " +
        std::to_string(k));
  }
  if (instance.budget.size() != n) {
    add(FindingKind::kDimensionMismatch, "budget has " +
        std::to_string(instance.budget.size()) + " entries, expected " +
        std::to_string(n));
  }
  const bool lender_shape_ok = instance.lender_utility.same_shape(n, k);
  const bool borrower_shape_ok = instance.borrower_utility.same_shape(k, n);
  if (!lender_shape_ok) {
    add(FindingKind::kDimensionMismatch, "lender_utility is not lenders x borrowers");
  }
  if (!borrower_shape_ok) {
    add(FindingKind::kDimensionMismatch, "borrower_utility is not borrowers x lenders");
  }

  for (std::size_t b = 0; b < instance.capacity.size(); ++b) {
    const double c = instance.capacity[b];
    if (!std::isfinite(c) || c <= 0.0) {
      add(FindingKind::kOutOfRange, "capacity of borrower " + std::to_string(b) +
          " must be positive and finite");
    }
  }
  for (std::size_t l = 0; l < instance.budget.size(); ++l) {
    const double q = instance.budget[l];
    if (!std::isfinite(q) || q <= 0.0) {
      add(FindingKind::kOutOfRange, "budget of lender " + std::to_string(l) +
          " must be positive and finite");
    }
  }

  auto check_rows = [&](const Matrix<double>& m, const char* side) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (!std::isfinite(row[i]) || row[i] < 0.0 || row[i] > 1.0) {
          add(FindingKind::kOutOfRange, std::string(side) + " " +
              std::to_string(r) + " utility " + std::to_string(i) +
              " outside [0, 1]");
        }
      }
      std::vector<double> sorted(row.begin(), row.end());
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        add(FindingKind::kTiedUtilities, std::string(side) + " row " +
            std::to_string(r) + " has tied utilities");
      }
    }
  };
  if (lender_shape_ok) check_rows(instance.lender_utility, "lender");
  if (borrower_shape_ok) check_rows(instance.borrower_utility, "borrower");

  const double demand =
      std::accumulate(instance.capacity.begin(), instance.capacity.end(), 0.0);
  const double supply =
      std::accumulate(instance.budget.begin(), instance.budget.end(), 0.0);
  if (demand > supply) {
    add(FindingKind::kAggregateInfeasible,
        "sum of capacities " + std::to_string(demand) +
            " exceeds sum of budgets " + std::to_string(supply));
  }
  if (k >= n && n > 0) {
    report.warnings.push_back("borrowers are not scarce relative to lenders (K >= N)");
  }
  return report;
}

inline void require_valid(const MarketInstance& instance) {
  const ValidationReport report = validate_instance(instance);
  if (!report.ok()) {
    const Finding& first = report.violations.front();
    const ErrorCode code = first.kind == FindingKind::kDimensionMismatch
                               ? ErrorCode::kDimensionMismatch
                           : first.kind == FindingKind::kTiedUtilities
                               ? ErrorCode::kTiedUtilities
                               : ErrorCode::kInvalidValue;
    throw Error(code, first.message);
  }
}

// FNV-1a over the instance's raw numbers; identifies the market in results.
inline std::uint64_t fingerprint(const MarketInstance& instance) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed_u64 = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  auto feed = [&](double v) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof v);
    feed_u64(bits);
  };
  feed_u64(instance.num_borrowers);
  feed_u64(instance.num_lenders);
  for (double v : instance.capacity) feed(v);
  for (double v : instance.budget) feed(v);
  for (double v : instance.lender_utility.data()) feed(v);
  for (double v : instance.borrower_utility.data()) feed(v);
  return h;
}

}  // namespace p2pmatch

#endif  // P2PMATCH_MARKET_HPP_
