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

// Lender-side UCB learning. Each lender treats borrowers as arms; the prior
// utility u_l(b) counts as one pseudo-observation, so
//
//   mu_l(b) = (u_l(b) + sum of rewards from b) / (1 + T_bl)
//
// and the index is mu_l(b) + sqrt(3 ln t / (2 T_bl)), or +inf while T_bl = 0.
// All matrices here are lender x borrower.

#ifndef P2PMATCH_BANDIT_HPP_
#define P2PMATCH_BANDIT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "p2pmatch/common.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/random.hpp"

namespace p2pmatch {

enum class RewardFamily { kGaussian, kDeterministic };

inline const char* to_string(RewardFamily family) {
  return family == RewardFamily::kGaussian ? "gaussian" : "deterministic";
}

inline RewardFamily reward_family_from_string(std::string_view name) {
  if (name == "gaussian") return RewardFamily::kGaussian;
  if (name == "deterministic") return RewardFamily::kDeterministic;
  throw Error(ErrorCode::kModeUnknown, "unknown reward family '" + std::string(name) + "'");
}

struct RewardModel {
  RewardFamily family = RewardFamily::kGaussian;
  double sigma = 1.0;

  friend bool operator==(const RewardModel&, const RewardModel&) = default;
};

inline void check_reward_model(const RewardModel& model) {
  if (!(model.sigma >= 0.0) || !std::isfinite(model.sigma)) {
    throw Error(ErrorCode::kInvalidValue, "reward sigma must be finite and nonnegative");
  }
  if ((model.family == RewardFamily::kDeterministic) != (model.sigma == 0.0)) {
    throw Error(ErrorCode::kInvalidValue,
                "deterministic rewards need sigma = 0 and gaussian rewards sigma > 0");
  }
}

struct BanditState {
  Matrix<double> prior;           // u_l(b)
  Matrix<double> empirical_mean;  // mu_l(b)
  Matrix<double> reward_sums;
  Matrix<std::uint64_t> match_count;  // T_bl, stored at (l, b)
  std::uint64_t step = 0;             // t
};

inline BanditState init_state(const MarketInstance& instance) {
  BanditState state;
  state.prior = instance.lender_utility;
  state.empirical_mean = instance.lender_utility;
  state.reward_sums = Matrix<double>(instance.num_lenders, instance.num_borrowers, 0.0);
  state.match_count =
      Matrix<std::uint64_t>(instance.num_lenders, instance.num_borrowers, 0);
  return state;
}

inline double sample_reward(const RewardModel& model, double mean, Rng& rng) {
  if (model.family == RewardFamily::kDeterministic) return mean;
  return mean + model.sigma * rng.normal();
}

inline void update_on_match(BanditState& state, std::size_t lender, std::size_t borrower,
                            double reward) {
  if (lender >= state.prior.rows() || borrower >= state.prior.cols()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "pair (" + std::to_string(lender) + ", " + std::to_string(borrower) +
                    ") is outside the market");
  }
  state.reward_sums(lender, borrower) += reward;
  const std::uint64_t count = ++state.match_count(lender, borrower);
  state.empirical_mean(lender, borrower) =
      (state.prior(lender, borrower) + state.reward_sums(lender, borrower)) /
      (1.0 + static_cast<double>(count));
}

inline double ucb_index(const BanditState& state, std::size_t lender, std::size_t borrower) {
  if (lender >= state.prior.rows() || borrower >= state.prior.cols()) {
    throw Error(ErrorCode::kIndexOutOfRange, "pair is outside the market");
  }
  const std::uint64_t count = state.match_count(lender, borrower);
  if (count == 0) return std::numeric_limits<double>::infinity();
  const double t = static_cast<double>(state.step);
  return state.empirical_mean(lender, borrower) +
         std::sqrt(3.0 * std::log(t) / (2.0 * static_cast<double>(count)));
}

// Finite stand-in for the +inf index: above mean + bonus for means in [0, 1]
// at any t <= horizon.
inline double dominating_constant(std::uint64_t horizon) {
  const double h = static_cast<double>(std::max<std::uint64_t>(horizon, 1));
  return 2.0 + std::sqrt(3.0 * std::log(h) / 2.0);
}

namespace internal {

// Per-lender factor in [1, 1.5) so that tie offsets differ between rows.
inline double tie_scale(std::size_t lender) {
  return 1.0 + 0.5 * static_cast<double>(mix_seed(lender) >> 11) * 0x1.0p-53;
}

// Spreads runs of equal values in a row: among equal entries the smaller
// borrower index ends up highest. Offsets stay below half the gap to the next
// larger value, so order between distinct values is kept.
inline void break_row_ties(std::span<double> row, double scale) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && row[order[j]] == row[order[i]]) ++j;
    const std::size_t group = j - i;
    if (group > 1) {
      const double value = row[order[i]];
      const double gap = j < order.size() ? row[order[j]] - value : 1.0;
      const double eta =
          std::min(gap / (2.0 * static_cast<double>(group)), 1e-6 * std::max(1.0, std::abs(value)));
      // order[i..j) is by ascending borrower index (stable sort).
      for (std::size_t g = 0; g < group; ++g) {
        row[order[i + g]] = value + static_cast<double>(group - 1 - g) * eta * scale;
      }
    }
    i = j;
  }
}

}  // namespace internal

// The utilities lenders report to the platform: UCB indices with +inf mapped
// to a finite constant that dominates every finite index, and ties split so
// each row is strict.
inline Matrix<double> current_utilities(const BanditState& state, std::uint64_t horizon) {
  const std::size_t n = state.prior.rows();
  const std::size_t k = state.prior.cols();
  Matrix<double> cu(n, k);
  double top = -std::numeric_limits<double>::infinity();
  bool any_sentinel = false;
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t b = 0; b < k; ++b) {
      cu(l, b) = ucb_index(state, l, b);
      if (std::isinf(cu(l, b))) {
        any_sentinel = true;
      } else {
        top = std::max(top, cu(l, b));
      }
    }
  }
  if (any_sentinel) {
    // Unclipped rewards can push a mean past 1; keep the sentinel on top.
    const double sentinel = std::max(dominating_constant(horizon), std::floor(top) + 2.0);
    for (double& v : cu.data()) {
      if (std::isinf(v)) v = sentinel;
    }
  }
  for (std::size_t l = 0; l < n; ++l) {
    internal::break_row_ties(cu.row(l), internal::tie_scale(l));
  }
  return cu;
}

}  // namespace p2pmatch

#endif  // P2PMATCH_BANDIT_HPP_
