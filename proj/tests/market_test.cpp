#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "p2pmatch/market.hpp"

namespace p2pmatch {
namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(GenerateInstance, LargeScaleMarket) {
  GenerationConfig g;
  g.num_borrowers = 20;
  g.num_lenders = 60;
  g.capacity_min = 5;
  g.capacity_max = 40;
  g.budget_min = 1;
  g.budget_max = 10;
  g.seed = 11;
  const MarketInstance inst = generate_instance(g);
  EXPECT_EQ(inst.num_borrowers, 20u);
  EXPECT_EQ(inst.num_lenders, 60u);
  ASSERT_EQ(inst.capacity.size(), 20u);
  ASSERT_EQ(inst.budget.size(), 60u);
  EXPECT_LE(sum(inst.capacity), sum(inst.budget));
  for (double c : inst.capacity) {
    EXPECT_GE(c, 5.0);
    EXPECT_LE(c, 40.0);
  }
  for (double q : inst.budget) {
    EXPECT_GE(q, 1.0);
    EXPECT_LE(q, 10.0);
  }
  for (double u : inst.lender_utility.data()) {
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_TRUE(validate_instance(inst).ok());
}

TEST(GenerateInstance, DegenerateRanges) {
  GenerationConfig g;
  g.num_borrowers = 1;
  g.num_lenders = 1;
  g.capacity_min = g.capacity_max = 5;
  g.budget_min = g.budget_max = 5;
  const MarketInstance inst = generate_instance(g);
  EXPECT_EQ(inst.capacity, std::vector<double>{5.0});
  EXPECT_EQ(inst.budget, std::vector<double>{5.0});
}

TEST(GenerateInstance, AggregateInfeasibleRangesHitTheAttemptCap) {
  GenerationConfig g;
  g.num_borrowers = 3;
  g.num_lenders = 2;
  g.capacity_min = g.capacity_max = 10;
  g.budget_min = g.budget_max = 1;
  g.max_attempts = 50;
  try {
    generate_instance(g);
    FAIL() << "expected AttemptCapExceeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAttemptCapExceeded);
  }
}

TEST(GenerateInstance, SameSeedSameInstance) {
  GenerationConfig g;
  g.num_borrowers = 4;
  g.num_lenders = 9;
  g.seed = 99;
  EXPECT_EQ(generate_instance(g), generate_instance(g));
  GenerationConfig h = g;
  h.seed = 100;
  EXPECT_NE(generate_instance(g), generate_instance(h));
}

TEST(GenerateInstance, IntegerAmounts) {
  GenerationConfig g;
  g.num_borrowers = 3;
  g.num_lenders = 12;
  g.capacity_min = 2;
  g.capacity_max = 9;
  g.integer_amounts = true;
  const MarketInstance inst = generate_instance(g);
  for (double c : inst.capacity) EXPECT_EQ(c, std::floor(c));
  for (double q : inst.budget) EXPECT_EQ(q, std::floor(q));
}

TEST(GenerateInstance, BadConfigIsRejected) {
  GenerationConfig g;
  g.capacity_min = 0;
  EXPECT_THROW(generate_instance(g), Error);
  g = {};
  g.budget_min = 3;
  g.budget_max = 2;
  EXPECT_THROW(generate_instance(g), Error);
}

TEST(GenerateInstance, EveryGeneratedInstanceValidates) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    GenerationConfig g;
    g.num_borrowers = 1 + seed % 5;
    g.num_lenders = 3 + seed % 11;
    g.capacity_min = 1;
    g.capacity_max = 6;
    g.seed = seed;
    EXPECT_TRUE(validate_instance(generate_instance(g)).ok()) << "seed " << seed;
  }
}

MarketInstance three_borrowers_one_lender(std::vector<double> row) {
  MarketInstance inst;
  inst.num_borrowers = 3;
  inst.num_lenders = 1;
  inst.capacity = {1, 1, 1};
  inst.budget = {5};
  inst.lender_utility = Matrix<double>(1, 3);
  for (std::size_t b = 0; b < 3; ++b) inst.lender_utility(0, b) = row[b];
  inst.borrower_utility = Matrix<double>(3, 1, 0.5);
  return inst;
}

TEST(Preferences, SortsByDescendingUtility) {
  const PreferenceLists p = preferences_from_utilities(three_borrowers_one_lender({0.2, 0.9, 0.5}));
  EXPECT_EQ(p.lender[0], (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Preferences, SingleBorrower) {
  GenerationConfig g;
  g.num_borrowers = 1;
  g.num_lenders = 7;
  g.capacity_min = g.capacity_max = 1;
  const PreferenceLists p = preferences_from_utilities(generate_instance(g));
  for (const auto& list : p.lender) EXPECT_EQ(list, std::vector<std::size_t>{0});
}

TEST(Preferences, TiedRowIsAnError) {
  try {
    preferences_from_utilities(three_borrowers_one_lender({0.3, 0.7, 0.3}));
    FAIL() << "expected TiedUtilities";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTiedUtilities);
  }
}

// Direct sort of (value, index) pairs as the reference ordering.
std::vector<std::size_t> reference_order(std::span<const double> row) {
  std::vector<std::pair<double, std::size_t>> pairs;
  for (std::size_t i = 0; i < row.size(); ++i) pairs.emplace_back(row[i], i);
  std::sort(pairs.begin(), pairs.end(), std::greater<>());
  std::vector<std::size_t> out;
  for (const auto& p : pairs) out.push_back(p.second);
  return out;
}

TEST(Preferences, MatchDirectSortAndStrictlyDecrease) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    GenerationConfig g;
    g.num_borrowers = 2 + seed % 6;
    g.num_lenders = 5 + seed % 9;
    g.capacity_min = 1;
    g.capacity_max = 3;
    g.seed = seed;
    const MarketInstance inst = generate_instance(g);
    const PreferenceLists p = preferences_from_utilities(inst);
    for (std::size_t l = 0; l < inst.num_lenders; ++l) {
      const auto row = inst.lender_utility.row(l);
      EXPECT_EQ(p.lender[l], reference_order(row));
      for (std::size_t i = 1; i < p.lender[l].size(); ++i) {
        EXPECT_GT(row[p.lender[l][i - 1]], row[p.lender[l][i]]);
      }
    }
    for (std::size_t b = 0; b < inst.num_borrowers; ++b) {
      EXPECT_EQ(p.borrower[b], reference_order(inst.borrower_utility.row(b)));
    }
  }
}

MarketInstance small_valid() {
  GenerationConfig g;
  g.num_borrowers = 2;
  g.num_lenders = 4;
  g.capacity_min = 1;
  g.capacity_max = 2;
  g.seed = 5;
  return generate_instance(g);
}

TEST(Validate, GeneratedInstanceHasEmptyReport) {
  const ValidationReport r = validate_instance(small_valid());
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(r.violations.empty());
}

TEST(Validate, TieInALenderRowNamesTheRow) {
  MarketInstance inst = small_valid();
  inst.lender_utility(2, 1) = inst.lender_utility(2, 0);
  const ValidationReport r = validate_instance(inst);
  ASSERT_TRUE(r.has(FindingKind::kTiedUtilities));
  bool named = false;
  for (const Finding& f : r.violations) {
    if (f.kind == FindingKind::kTiedUtilities && f.message.find('2') != std::string::npos) {
      named = true;
    }
  }
  EXPECT_TRUE(named);
}

TEST(Validate, AggregateInfeasibility) {
  MarketInstance inst = small_valid();
  inst.capacity[0] = 1000;
  EXPECT_TRUE(validate_instance(inst).has(FindingKind::kAggregateInfeasible));
}

TEST(Validate, DimensionAndRangeFindings) {
  MarketInstance inst = small_valid();
  inst.budget.pop_back();
  EXPECT_TRUE(validate_instance(inst).has(FindingKind::kDimensionMismatch));
  inst = small_valid();
  inst.capacity[1] = -1;
  EXPECT_TRUE(validate_instance(inst).has(FindingKind::kOutOfRange));
}

}  // namespace
}  // namespace p2pmatch
