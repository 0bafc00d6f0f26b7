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

// Experiment configuration and its flat text format: `key=value` pairs,
// any number per line, `#` starts a comment. Unknown or repeated keys are
// errors; missing keys keep the defaults below.

#ifndef P2PMATCH_CONFIG_HPP_
#define P2PMATCH_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "p2pmatch/bandit.hpp"
#include "p2pmatch/common.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/matching.hpp"
#include "p2pmatch/simulation.hpp"
#include "p2pmatch/solver.hpp"

namespace p2pmatch {

struct ExperimentConfig {
  GenerationConfig generation;  // k, n, c_min, c_max, q_min, q_max, seed
  ObjectiveWeights weights;
  SolverOptions solver;
  RewardModel reward;
  std::uint64_t horizon = 10000;
  std::uint64_t runs = 50;
  RegretMode regret_mode = RegretMode::kExpectedLenderUtility;
  bool resample_instance = false;
  std::string out_dir = "out";

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    const GenerationConfig& g = a.generation;
    const GenerationConfig& h = b.generation;
    return g.num_borrowers == h.num_borrowers && g.num_lenders == h.num_lenders &&
           g.capacity_min == h.capacity_min && g.capacity_max == h.capacity_max &&
           g.budget_min == h.budget_min && g.budget_max == h.budget_max && g.seed == h.seed &&
           a.weights.lambda1 == b.weights.lambda1 && a.weights.lambda2 == b.weights.lambda2 &&
           a.solver.mode == b.solver.mode && a.solver.algorithm == b.solver.algorithm &&
           a.solver.node_limit == b.solver.node_limit && a.reward == b.reward &&
           a.horizon == b.horizon && a.runs == b.runs && a.regret_mode == b.regret_mode &&
           a.resample_instance == b.resample_instance && a.out_dir == b.out_dir;
  }
};

// "exact" (anchor search), "exact-lp" (LP branch-and-bound) or "heuristic".
inline std::string solver_mode_name(const SolverOptions& options) {
  if (options.mode == SolveMode::kHeuristic) return "heuristic";
  return options.algorithm == ExactAlgorithm::kAnchorSearch ? "exact" : "exact-lp";
}

inline void set_solver_mode(SolverOptions& options, std::string_view name) {
  if (name == "exact") {
    options.mode = SolveMode::kExact;
    options.algorithm = ExactAlgorithm::kAnchorSearch;
  } else if (name == "exact-lp") {
    options.mode = SolveMode::kExact;
    options.algorithm = ExactAlgorithm::kLpBranchAndBound;
  } else if (name == "heuristic") {
    options.mode = SolveMode::kHeuristic;
  } else {
    throw Error(ErrorCode::kInvalidValue, "unknown solver mode '" + std::string(name) + "'");
  }
}

inline void check_experiment_config(const ExperimentConfig& config) {
  check_generation_config(config.generation);
  check_weights(config.weights);
  check_solver_options(config.solver);
  check_reward_model(config.reward);
  if (config.horizon < 1) throw Error(ErrorCode::kInvalidValue, "horizon must be >= 1");
  if (config.runs < 1) throw Error(ErrorCode::kInvalidValue, "runs must be >= 1");
  if (config.out_dir.empty()) throw Error(ErrorCode::kInvalidValue, "out_dir is empty");
}

namespace internal {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kInvalidValue,
                "key '" + std::string(key) + "': bad number '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(ErrorCode::kInvalidValue,
              "key '" + std::string(key) + "': expected true or false, got '" +
                  std::string(text) + "'");
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Applies one pair; false when the key is unknown.
inline bool apply_key(ExperimentConfig& c, std::string_view key, std::string_view value) {
  GenerationConfig& g = c.generation;
  if (key == "k") {
    g.num_borrowers = parse_number<std::size_t>(key, value);
  } else if (key == "n") {
    g.num_lenders = parse_number<std::size_t>(key, value);
  } else if (key == "c_min") {
    g.capacity_min = parse_number<double>(key, value);
  } else if (key == "c_max") {
    g.capacity_max = parse_number<double>(key, value);
  } else if (key == "q_min") {
    g.budget_min = parse_number<double>(key, value);
  } else if (key == "q_max") {
    g.budget_max = parse_number<double>(key, value);
  } else if (key == "lambda1") {
    c.weights.lambda1 = parse_number<double>(key, value);
  } else if (key == "lambda2") {
    c.weights.lambda2 = parse_number<double>(key, value);
  } else if (key == "horizon") {
    c.horizon = parse_number<std::uint64_t>(key, value);
  } else if (key == "runs") {
    c.runs = parse_number<std::uint64_t>(key, value);
  } else if (key == "seed") {
    g.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "reward_family") {
    c.reward.family = reward_family_from_string(value);
  } else if (key == "reward_sigma") {
    c.reward.sigma = parse_number<double>(key, value);
  } else if (key == "regret_mode") {
    c.regret_mode = regret_mode_from_string(value);
  } else if (key == "solver_mode") {
    set_solver_mode(c.solver, value);
  } else if (key == "node_limit") {
    c.solver.node_limit = parse_number<long>(key, value);
  } else if (key == "resample_instance") {
    c.resample_instance = parse_bool(key, value);
  } else if (key == "out_dir") {
    c.out_dir = std::string(value);
  } else {
    return false;
  }
  return true;
}

}  // namespace internal

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string word;
    while (words >> word) {
      const std::string where = "line " + std::to_string(line_no);
      const auto eq = word.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::kParseError, where + ": expected key=value, got '" + word + "'");
      }
      const std::string key = word.substr(0, eq);
      const std::string value = word.substr(eq + 1);
      if (value.empty()) {
        throw Error(ErrorCode::kParseError, where + ", key '" + key + "': missing value");
      }
      if (!seen.insert(key).second) {
        throw Error(ErrorCode::kParseError, where + ", key '" + key + "': given twice");
      }
      try {
        if (!internal::apply_key(config, key, value)) {
          throw Error(ErrorCode::kUnknownKey, where + ": unknown key '" + key + "'");
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kUnknownKey) throw;
        throw Error(ErrorCode::kInvalidValue, where + ": " + e.what());
      }
    }
  }
  // A deterministic reward model has no noise unless a sigma was given.
  if (config.reward.family == RewardFamily::kDeterministic && !seen.contains("reward_sigma")) {
    config.reward.sigma = 0.0;
  }
  check_experiment_config(config);
  return config;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

// Every key, one per line, in the documented order. Reals are written with
// 17 significant digits so parsing gives back the same doubles.
inline std::string serialize_config(const ExperimentConfig& c) {
  using internal::format_real;
  const GenerationConfig& g = c.generation;
  std::ostringstream out;
  out << "k=" << g.num_borrowers << '\n'
      << "n=" << g.num_lenders << '\n'
      << "c_min=" << format_real(g.capacity_min) << '\n'
      << "c_max=" << format_real(g.capacity_max) << '\n'
      << "q_min=" << format_real(g.budget_min) << '\n'
      << "q_max=" << format_real(g.budget_max) << '\n'
      << "lambda1=" << format_real(c.weights.lambda1) << '\n'
      << "lambda2=" << format_real(c.weights.lambda2) << '\n'
      << "horizon=" << c.horizon << '\n'
      << "runs=" << c.runs << '\n'
      << "seed=" << g.seed << '\n'
      << "reward_family=" << to_string(c.reward.family) << '\n'
      << "reward_sigma=" << format_real(c.reward.sigma) << '\n'
      << "regret_mode=" << to_string(c.regret_mode) << '\n'
      << "solver_mode=" << solver_mode_name(c.solver) << '\n'
      << "node_limit=" << c.solver.node_limit << '\n'
      << "resample_instance=" << (c.resample_instance ? "true" : "false") << '\n'
      << "out_dir=" << c.out_dir << '\n';
  return out.str();
}

}  // namespace p2pmatch

#endif  // P2PMATCH_CONFIG_HPP_
