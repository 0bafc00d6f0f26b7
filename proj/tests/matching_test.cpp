#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "p2pmatch/market.hpp"
#include "p2pmatch/matching.hpp"
#include "p2pmatch/random.hpp"

namespace p2pmatch {
namespace {

MarketInstance make(std::vector<double> c, std::vector<double> q,
                    std::vector<std::vector<double>> lender_rows,
                    std::vector<std::vector<double>> borrower_rows) {
  MarketInstance inst;
  inst.num_borrowers = c.size();
  inst.num_lenders = q.size();
  inst.capacity = std::move(c);
  inst.budget = std::move(q);
  inst.lender_utility = Matrix<double>(inst.num_lenders, inst.num_borrowers);
  for (std::size_t l = 0; l < inst.num_lenders; ++l) {
    for (std::size_t b = 0; b < inst.num_borrowers; ++b) inst.lender_utility(l, b) = lender_rows[l][b];
  }
  inst.borrower_utility = Matrix<double>(inst.num_borrowers, inst.num_lenders);
  for (std::size_t b = 0; b < inst.num_borrowers; ++b) {
    for (std::size_t l = 0; l < inst.num_lenders; ++l) inst.borrower_utility(b, l) = borrower_rows[b][l];
  }
  return inst;
}

// Stability inequality evaluated pair by pair from raw utilities.
Assignment reference_blocking(const MarketInstance& inst, const Assignment& x) {
  const std::size_t k = inst.num_borrowers;
  const std::size_t n = inst.num_lenders;
  Assignment w(k, n, 0);
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t l = 0; l < n; ++l) {
      double better_lenders = 0.0;
      for (std::size_t o = 0; o < n; ++o) {
        if (inst.borrower_utility(b, o) > inst.borrower_utility(b, l)) better_lenders += x(b, o);
      }
      double better_borrowers = 0.0;
      for (std::size_t o = 0; o < k; ++o) {
        if (inst.lender_utility(l, o) > inst.lender_utility(l, b)) better_borrowers += x(o, l);
      }
      const double c = inst.capacity[b];
      const double lhs = c * x(b, l) + c * better_lenders + inst.budget[l] * better_borrowers;
      w(b, l) = lhs >= c ? 0 : 1;
    }
  }
  return w;
}

Assignment random_assignment(const MarketInstance& inst, Rng& rng) {
  Assignment x(inst.num_borrowers, inst.num_lenders, 0);
  for (std::size_t l = 0; l < inst.num_lenders; ++l) {
    const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(inst.num_borrowers));
    if (pick > 0) x(static_cast<std::size_t>(pick - 1), l) = 1;
  }
  return x;
}

TEST(BlockingPairs, TopChoicesLeaveNoBlockingPair) {
  // Each lender's favourite is the borrower that ranks it first.
  const MarketInstance inst = make({2, 2}, {2, 2}, {{0.9, 0.1}, {0.2, 0.8}},
                                   {{0.9, 0.3}, {0.1, 0.7}});
  Assignment x(2, 2, 0);
  x(0, 0) = 1;
  x(1, 1) = 1;
  const BlockingPairs w = blocking_pairs(inst, x);
  EXPECT_EQ(w.count, 0u);
  EXPECT_EQ(w.blocking, Assignment(2, 2, 0));
}

TEST(BlockingPairs, EmptyAssignmentBlocksEverywhere) {
  GenerationConfig g;
  g.num_borrowers = 3;
  g.num_lenders = 5;
  g.capacity_min = 1;
  g.capacity_max = 3;
  const MarketInstance inst = generate_instance(g);
  const BlockingPairs w = blocking_pairs(inst, Assignment(3, 5, 0));
  EXPECT_EQ(w.count, 15u);
  EXPECT_EQ(w.blocking, Assignment(3, 5, 1));
}

TEST(BlockingPairs, HandSetTwoByThreeMatchesPairwiseEvaluation) {
  const MarketInstance inst =
      make({4, 3}, {2, 3, 4}, {{0.7, 0.2}, {0.1, 0.6}, {0.5, 0.8}},
           {{0.3, 0.9, 0.6}, {0.8, 0.4, 0.2}});
  for (int trial = 0; trial < 27; ++trial) {
    // All 27 lender-feasible assignments via base-3 digits.
    Assignment x(2, 3, 0);
    int code = trial;
    for (std::size_t l = 0; l < 3; ++l, code /= 3) {
      if (code % 3) x(static_cast<std::size_t>(code % 3 - 1), l) = 1;
    }
    const BlockingPairs w = blocking_pairs(inst, x);
    const Assignment ref = reference_blocking(inst, x);
    EXPECT_EQ(w.blocking, ref) << "assignment " << trial;
    std::size_t count = 0;
    for (auto v : ref.data()) count += v;
    EXPECT_EQ(w.count, count);
  }
  // l2 -> b1 only. b1 ranks l2 first, so its other pairs are rescued by the
  // c_b term; b2 holds nobody and l2 prefers b2, so every b2 pair blocks.
  Assignment x(2, 3, 0);
  x(0, 1) = 1;
  Assignment expected(2, 3, 0);
  expected(1, 0) = expected(1, 1) = expected(1, 2) = 1;
  EXPECT_EQ(blocking_pairs(inst, x).blocking, expected);
}

TEST(BlockingPairs, RejectsDoubleMatchedLender) {
  const MarketInstance inst = make({1, 1}, {1}, {{0.4, 0.6}}, {{0.5}, {0.5}});
  Assignment x(2, 1, 1);
  EXPECT_THROW(blocking_pairs(inst, x), Error);
  EXPECT_THROW(blocking_pairs(inst, Assignment(1, 1, 0)), Error);
}

TEST(ObjectiveValue, Examples) {
  const MarketInstance inst = make({1}, {1}, {{0.9}}, {{0.4}});
  const ObjectiveWeights w{1.0, 1.0};
  EXPECT_EQ(objective_value(inst, Assignment(1, 1, 0), Assignment(1, 1, 0), w,
                            inst.lender_utility), 0.0);
  EXPECT_DOUBLE_EQ(objective_value(inst, Assignment(1, 1, 1), Assignment(1, 1, 0), w,
                                   inst.lender_utility), 0.9);
}

TEST(ObjectiveValue, MatchesDoubleLoop) {
  Rng rng(8);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    GenerationConfig g;
    g.num_borrowers = 1 + seed % 4;
    g.num_lenders = 2 + seed % 7;
    g.capacity_min = 1;
    g.capacity_max = 4;
    g.seed = seed;
    const MarketInstance inst = generate_instance(g);
    const Assignment x = random_assignment(inst, rng);
    Assignment w(inst.num_borrowers, inst.num_lenders, 0);
    for (auto& v : w.data()) v = rng.uniform01() < 0.5;
    const ObjectiveWeights weights{rng.uniform(0.1, 2.0), rng.uniform(0.0, 2.0)};
    double reference = 0.0;
    double penalty = 0.0;
    for (std::size_t b = 0; b < inst.num_borrowers; ++b) {
      for (std::size_t l = 0; l < inst.num_lenders; ++l) {
        reference += inst.lender_utility(l, b) * x(b, l);
        penalty += w(b, l);
      }
    }
    reference = weights.lambda1 * reference - weights.lambda2 * penalty;
    EXPECT_NEAR(objective_value(inst, x, w, weights, inst.lender_utility), reference, 1e-12);
  }
}

TEST(ObjectiveValue, DimensionMismatch) {
  const MarketInstance inst = make({1}, {1}, {{0.9}}, {{0.4}});
  try {
    objective_value(inst, Assignment(2, 1, 0), Assignment(1, 1, 0), {}, inst.lender_utility);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(DeferredAcceptance, BothLendersNeededForCoverage) {
  const MarketInstance inst = make({4}, {3, 3}, {{0.5}, {0.6}}, {{0.2, 0.7}});
  const Assignment x = deferred_acceptance_warm_start(inst);
  EXPECT_EQ(x(0, 0), 1);
  EXPECT_EQ(x(0, 1), 1);
}

TEST(DeferredAcceptance, LargeCapacitiesKeepEveryTopChoice) {
  const MarketInstance inst =
      make({100, 100}, {5, 5, 5}, {{0.9, 0.1}, {0.3, 0.8}, {0.6, 0.2}},
           {{0.9, 0.8, 0.7}, {0.1, 0.2, 0.3}});
  const Assignment x = deferred_acceptance_warm_start(inst);
  EXPECT_EQ(x(0, 0), 1);
  EXPECT_EQ(x(1, 1), 1);
  EXPECT_EQ(x(0, 2), 1);
}

TEST(DeferredAcceptance, NeverMatchesALenderTwice) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    GenerationConfig g;
    g.num_borrowers = 3;
    g.num_lenders = 8;
    g.capacity_min = 1;
    g.capacity_max = 12;
    g.seed = seed;
    const MarketInstance inst = generate_instance(g);
    const Assignment x = deferred_acceptance_warm_start(inst);
    for (std::size_t l = 0; l < 8; ++l) {
      ASSERT_LE(x(0, l) + x(1, l) + x(2, l), 1) << "seed " << seed;
    }
  }
}

}  // namespace
}  // namespace p2pmatch
