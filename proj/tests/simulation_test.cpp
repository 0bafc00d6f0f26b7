#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <gtest/gtest.h>

#include "p2pmatch/bandit.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/oracle.hpp"
#include "p2pmatch/simulation.hpp"

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

MarketInstance two_by_four() {
  return make({3, 3}, {3, 3, 3, 3}, {{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}, {0.2, 0.8}},
              {{0.9, 0.8, 0.2, 0.1}, {0.1, 0.2, 0.9, 0.8}});
}

const RewardModel kExact{RewardFamily::kDeterministic, 0.0};

// Records where lender 0 always sits with `borrower`.
std::vector<StepRecord> fixed_records(std::size_t borrower, std::size_t steps) {
  std::vector<StepRecord> records;
  for (std::size_t t = 1; t <= steps; ++t) {
    StepRecord r;
    r.t = t;
    r.matched = {borrower};
    r.reward = {0.0};
    records.push_back(r);
  }
  return records;
}

Matching optimum_at(const MarketInstance& inst, std::size_t borrower) {
  Assignment x(inst.num_borrowers, inst.num_lenders, 0);
  x(borrower, 0) = 1;
  return internal::make_matching(inst, internal::index_preferences(inst), x, {},
                                 inst.lender_utility, MatchStatus::kOptimal);
}

MarketInstance one_lender_two_borrowers(double u0, double u1) {
  return make({1, 1}, {5}, {{u0, u1}}, {{0.5}, {0.6}});
}

TEST(CumulativeRegret, ZeroWhenAlwaysOptimal) {
  const MarketInstance inst = one_lender_two_borrowers(0.8, 0.3);
  const RegretTrace trace = cumulative_regret(fixed_records(0, 10), optimum_at(inst, 0), inst);
  for (double v : trace.cumulative.data()) EXPECT_EQ(v, 0.0);
}

TEST(CumulativeRegret, LinearGrowthWhenStuckBelowTheOptimum) {
  const MarketInstance inst = one_lender_two_borrowers(0.8, 0.3);
  const RegretTrace trace = cumulative_regret(fixed_records(1, 10), optimum_at(inst, 0), inst);
  for (std::size_t s = 0; s < 10; ++s) {
    EXPECT_NEAR(trace.cumulative(0, s), 0.5 * static_cast<double>(s + 1), 1e-12);
  }
  EXPECT_NEAR(trace.cumulative(0, 9), 5.0, 1e-12);
}

TEST(CumulativeRegret, NegativeWhenDoingBetterThanTheBaseline) {
  const MarketInstance inst = one_lender_two_borrowers(0.7, 0.9);
  const RegretTrace trace = cumulative_regret(fixed_records(1, 10), optimum_at(inst, 0), inst);
  for (std::size_t s = 0; s < 10; ++s) {
    EXPECT_NEAR(trace.cumulative(0, s), -0.2 * static_cast<double>(s + 1), 1e-12);
  }
  EXPECT_LT(trace.cumulative(0, 9), 0.0);
}

TEST(CumulativeRegret, ModesPickTheSubtractedTerm) {
  const MarketInstance inst = one_lender_two_borrowers(0.8, 0.3);
  std::vector<StepRecord> records = fixed_records(1, 3);
  for (auto& r : records) r.reward = {0.25};
  records[2].matched = {std::nullopt};
  records[2].reward = {0.0};
  const Matching opt = optimum_at(inst, 0);
  const RegretTrace realized = cumulative_regret(records, opt, inst, RegretMode::kRealizedReward);
  EXPECT_NEAR(realized.contribution(0, 0), 0.8 - 0.25, 1e-15);
  EXPECT_NEAR(realized.contribution(0, 2), 0.8, 1e-15);  // unmatched step
  const RegretTrace borrower =
      cumulative_regret(records, opt, inst, RegretMode::kExpectedBorrowerUtility);
  EXPECT_NEAR(borrower.contribution(0, 1), 0.8 - 0.6, 1e-15);
  EXPECT_THROW(cumulative_regret(records, opt, inst, static_cast<RegretMode>(9)), Error);
}

TEST(RunSimulation, SingleAgentsHaveZeroRegret) {
  const MarketInstance inst = make({2}, {3}, {{0.4}}, {{0.6}});
  for (const RewardModel& model : {kExact, RewardModel{RewardFamily::kGaussian, 1.0}}) {
    const RunResult r = run_simulation(inst, {}, model, 40, {}, 5);
    for (double v : r.trace.cumulative.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(RunSimulation, HorizonZeroIsRejected) {
  try {
    run_simulation(two_by_four(), {}, kExact, 0, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidHorizon);
  }
}

TEST(RunSimulation, InfeasibleMarketAbortsWithTheStep) {
  const MarketInstance inst = make({3, 3}, {2, 2, 2}, {{0.6, 0.4}, {0.3, 0.7}, {0.5, 0.1}},
                                   {{0.2, 0.5, 0.9}, {0.8, 0.3, 0.6}});
  try {
    run_simulation(inst, {}, kExact, 5, {}, 1);
    FAIL();
  } catch (const StepError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(RunSimulation, WarmStartedAtTheOptimumHasNoRegretAtStepOne) {
  // Lender and borrower preferences agree, so the stable optimum on true
  // utilities is also the combined optimum.
  const MarketInstance inst = two_by_four();
  const Matching stable = solve_matching(inst, {}, std::nullopt);
  const Matching combined = solve_optimal_combined(inst, {});
  ASSERT_EQ(stable.assignment, combined.assignment);
  StepRecord rec;
  rec.t = 1;
  rec.matched = stable.lender_match;
  rec.reward.assign(4, 0.0);
  const RegretTrace trace = cumulative_regret({rec}, combined, inst);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(trace.cumulative(l, 0), 0.0);
}

TEST(RunSimulation, MatchesReferenceLoopDrivenByEnumeration) {
  const MarketInstance inst = two_by_four();
  const std::uint64_t horizon = 50;
  const RunResult got = run_simulation(inst, {}, kExact, horizon, {}, 3);

  BanditState state = init_state(inst);
  const Matching opt = enumerate_optimal(inst, {}, UtilitySelector::kCombined);
  std::vector<double> cumulative(4, 0.0);
  for (std::uint64_t t = 1; t <= horizon; ++t) {
    const Matrix<double> cu = current_utilities(state, horizon);
    const Matching m =
        enumerate_optimal(with_lender_utility(inst, cu), {}, UtilitySelector::kLenderOnly);
    ASSERT_EQ(m.status, MatchStatus::kOptimal);
    state.step = t;
    for (std::size_t l = 0; l < 4; ++l) {
      double received = 0.0;
      if (m.lender_match[l]) {
        const std::size_t b = *m.lender_match[l];
        update_on_match(state, l, b, inst.borrower_utility(b, l));
        received = inst.lender_utility(l, b);
      }
      ASSERT_EQ(got.records[t - 1].matched[l], m.lender_match[l]) << "t " << t;
      const double best = opt.lender_match[l] ? inst.lender_utility(l, *opt.lender_match[l]) : 0.0;
      cumulative[l] += best - received;
      EXPECT_EQ(got.trace.cumulative(l, t - 1), cumulative[l]) << "t " << t;
    }
  }
}

TEST(RunSimulation, CountsFollowTheMatchSequence) {
  GenerationConfig g;
  g.num_borrowers = 3;
  g.num_lenders = 7;
  g.capacity_min = 1;
  g.capacity_max = 5;
  g.seed = 21;
  const MarketInstance inst = generate_instance(g);
  const RunResult r = run_simulation(inst, {}, {}, 120, {}, 8);
  ASSERT_EQ(r.records.size(), 120u);
  std::vector<std::uint64_t> matched(7, 0);
  for (const StepRecord& rec : r.records) {
    for (std::size_t l = 0; l < 7; ++l) matched[l] += rec.matched[l].has_value();
  }
  // Replay rewards to rebuild the counts.
  BanditState state = init_state(inst);
  for (const StepRecord& rec : r.records) {
    for (std::size_t l = 0; l < 7; ++l) {
      if (rec.matched[l]) update_on_match(state, l, *rec.matched[l], rec.reward[l]);
    }
  }
  for (std::size_t l = 0; l < 7; ++l) {
    std::uint64_t row = 0;
    for (std::size_t b = 0; b < 3; ++b) row += state.match_count(l, b);
    EXPECT_EQ(row, matched[l]);
  }
}

TEST(RunSimulation, TelescopingAndDeterminism) {
  GenerationConfig g;
  g.num_borrowers = 3;
  g.num_lenders = 8;
  g.capacity_min = 1;
  g.capacity_max = 6;
  g.seed = 2;
  const MarketInstance inst = generate_instance(g);
  const RunResult a = run_simulation(inst, {}, {}, 150, {}, 77);
  const RunResult b = run_simulation(inst, {}, {}, 150, {}, 77);
  EXPECT_EQ(a.trace.cumulative, b.trace.cumulative);
  EXPECT_EQ(a.instance_fingerprint, b.instance_fingerprint);
  for (std::size_t s = 0; s < 150; ++s) {
    EXPECT_EQ(a.records[s].matched, b.records[s].matched);
    EXPECT_EQ(a.records[s].reward, b.records[s].reward);
    for (std::size_t l = 0; l < 8; ++l) {
      const double prev = s == 0 ? 0.0 : a.trace.cumulative(l, s - 1);
      EXPECT_EQ(a.trace.cumulative(l, s), prev + a.trace.contribution(l, s));
    }
  }
}

TEST(AggregateRuns, SingleRunHasZeroDeviation) {
  const RunResult r = run_simulation(two_by_four(), {}, {}, 30, {}, 1);
  const AggregateResult agg = aggregate_runs({r});
  EXPECT_EQ(agg.mean, r.trace.cumulative);
  for (double v : agg.stddev.data()) EXPECT_EQ(v, 0.0);
}

TEST(AggregateRuns, IdenticalSeedsHaveZeroDeviation) {
  const RunResult r = run_simulation(two_by_four(), {}, {}, 30, {}, 4);
  const AggregateResult agg = aggregate_runs({r, r});
  for (double v : agg.stddev.data()) EXPECT_EQ(v, 0.0);
  for (double v : agg.terminal_std) EXPECT_EQ(v, 0.0);
}

TEST(AggregateRuns, MeanMatchesIndependentRecomputation) {
  GenerationConfig g;
  g.num_borrowers = 2;
  g.num_lenders = 6;
  g.capacity_min = 1;
  g.capacity_max = 6;
  g.seed = 13;
  const MarketInstance inst = generate_instance(g);
  std::vector<RunResult> runs;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    runs.push_back(run_simulation(inst, {}, {}, 40, {}, seed));
  }
  const AggregateResult agg = aggregate_runs(runs);
  for (std::size_t l = 0; l < 6; ++l) {
    for (std::size_t s = 0; s < 40; ++s) {
      double total = 0.0;
      double sq = 0.0;
      for (const RunResult& r : runs) total += r.trace.cumulative(l, s);
      const double mean = total / 20.0;
      for (const RunResult& r : runs) {
        sq += (r.trace.cumulative(l, s) - mean) * (r.trace.cumulative(l, s) - mean);
      }
      EXPECT_NEAR(agg.mean(l, s), mean, 1e-12);
      EXPECT_NEAR(agg.stddev(l, s), std::sqrt(sq / 20.0), 1e-12);
    }
  }
}

TEST(AggregateRuns, TerminalSlopeOfALine) {
  RunResult r;
  r.trace.cumulative = Matrix<double>(1, 40, 0.0);
  for (std::size_t s = 0; s < 40; ++s) r.trace.cumulative(0, s) = 0.25 * static_cast<double>(s + 1) + 3;
  const AggregateResult agg = aggregate_runs({r});
  EXPECT_NEAR(agg.terminal_slope[0], 0.25, 1e-12);
}

TEST(AggregateRuns, ShapeMismatch) {
  RunResult a;
  a.trace.cumulative = Matrix<double>(2, 5, 0.0);
  RunResult b;
  b.trace.cumulative = Matrix<double>(2, 6, 0.0);
  try {
    aggregate_runs({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  EXPECT_THROW(aggregate_runs({}), Error);
}

}  // namespace
}  // namespace p2pmatch
