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

// Command-line front end: generate, run, oracle-check, summarize.
// Exit codes: 0 success, 1 usage error, 2 runtime error (including an
// oracle-check that finds a mismatch).

#ifndef P2PMATCH_CLI_HPP_
#define P2PMATCH_CLI_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "p2pmatch/config.hpp"
#include "p2pmatch/experiment.hpp"
#include "p2pmatch/io.hpp"
#include "p2pmatch/oracle.hpp"
#include "p2pmatch/random.hpp"
#include "p2pmatch/solver.hpp"

namespace p2pmatch {

struct OracleCheckOptions {
  std::size_t k = 2;
  std::size_t n = 4;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  double c_min = 1.0;
  double c_max = 8.0;
  double q_min = 1.0;
  double q_max = 6.0;
  ObjectiveWeights weights;
  SolverOptions solver;
};

struct OracleCheckResult {
  std::size_t matched = 0;
  std::size_t trials = 0;
  std::vector<std::uint64_t> failed_seeds;
};

namespace internal {

inline bool same_matching(const Matching& a, const Matching& b) {
  if (a.status != b.status) return false;
  if (a.status == MatchStatus::kInfeasible) return true;
  return a.assignment == b.assignment && std::abs(a.objective - b.objective) <= 1e-9;
}

}  // namespace internal

// Trial i uses the instance generated from derive_seed(seed, i). A trial
// matches when both the stable program and the combined-utility program
// agree with enumeration in status, assignment and objective (1e-9).
inline OracleCheckResult oracle_check(const OracleCheckOptions& options) {
  OracleCheckResult result;
  SolverOptions exact = options.solver;
  exact.mode = SolveMode::kExact;
  for (std::size_t i = 0; i < options.trials; ++i) {
    GenerationConfig g;
    g.num_borrowers = options.k;
    g.num_lenders = options.n;
    g.capacity_min = options.c_min;
    g.capacity_max = options.c_max;
    g.budget_min = options.q_min;
    g.budget_max = options.q_max;
    g.seed = derive_seed(options.seed, i);
    const MarketInstance inst = generate_instance(g);
    const bool stable_ok = internal::same_matching(
        solve_matching(inst, options.weights, std::nullopt, exact),
        enumerate_optimal(inst, options.weights, UtilitySelector::kLenderOnly));
    const bool combined_ok = internal::same_matching(
        solve_optimal_combined(inst, options.weights, exact),
        enumerate_optimal(inst, options.weights, UtilitySelector::kCombined));
    ++result.trials;
    if (stable_ok && combined_ok) {
      ++result.matched;
    } else {
      result.failed_seeds.push_back(g.seed);
    }
  }
  return result;
}

namespace internal {

inline void write_run_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                              const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_trace_csv(result.runs, (base / "trace.csv").string());
  write_summary_json(result.aggregate, &config, (base / "summary.json").string());
  if (result.instances.size() == 1) {
    write_instance(result.instances.front(), (base / "instance.txt").string());
  } else {
    for (std::size_t r = 0; r < result.instances.size(); ++r) {
      write_instance(result.instances[r],
                     (base / ("instance_" + std::to_string(r + 1) + ".txt")).string());
    }
  }
}

}  // namespace internal

inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Borrower-lender matching with bandit feedback", "p2pmatch"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a random instance file");
  std::string gen_config;
  std::string gen_out;
  std::optional<std::size_t> gen_k;
  std::optional<std::size_t> gen_n;
  std::optional<double> gen_c_min;
  std::optional<double> gen_c_max;
  std::optional<double> gen_q_min;
  std::optional<double> gen_q_max;
  std::optional<std::uint64_t> gen_seed;
  generate->add_option("--config", gen_config, "config file supplying defaults");
  generate->add_option("--out", gen_out, "instance file to write")->required();
  generate->add_option("--k", gen_k, "borrowers");
  generate->add_option("--n", gen_n, "lenders");
  generate->add_option("--c-min", gen_c_min);
  generate->add_option("--c-max", gen_c_max);
  generate->add_option("--q-min", gen_q_min);
  generate->add_option("--q-max", gen_q_max);
  generate->add_option("--seed", gen_seed);

  // run
  auto* run = app.add_subcommand("run", "run an experiment, write trace.csv and summary.json");
  std::string run_config;
  std::string run_instance;
  std::string run_out_dir;
  unsigned run_jobs = 1;
  run->add_option("--config", run_config, "config file")->required();
  run->add_option("--instance", run_instance, "use this instance instead of generating one");
  run->add_option("--out-dir", run_out_dir, "overrides out_dir");
  run->add_option("--jobs", run_jobs, "worker threads")->check(CLI::PositiveNumber);

  // oracle-check
  auto* check = app.add_subcommand("oracle-check", "compare the solver with enumeration");
  OracleCheckOptions oc;
  std::string oc_solver = "exact";
  check->add_option("--k", oc.k)->check(CLI::PositiveNumber);
  check->add_option("--n", oc.n)->check(CLI::PositiveNumber);
  check->add_option("--trials", oc.trials);
  check->add_option("--seed", oc.seed);
  check->add_option("--c-min", oc.c_min);
  check->add_option("--c-max", oc.c_max);
  check->add_option("--q-min", oc.q_min);
  check->add_option("--q-max", oc.q_max);
  check->add_option("--lambda1", oc.weights.lambda1);
  check->add_option("--lambda2", oc.weights.lambda2);
  check->add_option("--solver", oc_solver, "exact or exact-lp")
      ->check(CLI::IsMember({"exact", "exact-lp"}));

  // summarize
  auto* summarize = app.add_subcommand("summarize", "aggregate trace CSVs into a summary");
  std::vector<std::string> sum_csv;
  std::string sum_out;
  std::string sum_config;
  summarize->add_option("--csv", sum_csv, "trace CSV files")->required();
  summarize->add_option("--out", sum_out, "summary JSON to write")->required();
  summarize->add_option("--config", sum_config, "config to echo in the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) {
      ExperimentConfig config;
      if (!gen_config.empty()) config = load_config(gen_config);
      GenerationConfig& g = config.generation;
      if (gen_k) g.num_borrowers = *gen_k;
      if (gen_n) g.num_lenders = *gen_n;
      if (gen_c_min) g.capacity_min = *gen_c_min;
      if (gen_c_max) g.capacity_max = *gen_c_max;
      if (gen_q_min) g.budget_min = *gen_q_min;
      if (gen_q_max) g.budget_max = *gen_q_max;
      if (gen_seed) g.seed = *gen_seed;
      write_instance(generate_instance(g), gen_out);
      out << "wrote " << gen_out << '\n';
    } else if (run->parsed()) {
      ExperimentConfig config = load_config(run_config);
      if (!run_out_dir.empty()) config.out_dir = run_out_dir;
      std::optional<MarketInstance> fixed;
      if (!run_instance.empty()) fixed = read_instance(run_instance);
      const ExperimentResult result = run_experiment(config, fixed, run_jobs);
      internal::write_run_outputs(config, result, config.out_dir);
      out << "wrote " << config.out_dir << ": " << result.runs.size() << " runs x "
          << config.horizon << " steps, " << result.aggregate.fallback_steps
          << " fallback steps\n";
    } else if (check->parsed()) {
      set_solver_mode(oc.solver, oc_solver);
      const OracleCheckResult r = oracle_check(oc);
      out << r.matched << "/" << r.trials << " matched oracle\n";
      for (std::uint64_t s : r.failed_seeds) err << "mismatch: instance seed " << s << '\n';
      return r.matched == r.trials ? 0 : 2;
    } else if (summarize->parsed()) {
      std::optional<ExperimentConfig> config;
      if (!sum_config.empty()) config = load_config(sum_config);
      std::vector<RunResult> runs;
      for (const std::string& path : sum_csv) {
        std::vector<RunResult> part = runs_from_trace(read_trace_csv(path));
        for (RunResult& r : part) runs.push_back(std::move(r));
      }
      const AggregateResult agg = aggregate_runs(runs);
      write_summary_json(agg, config ? &*config : nullptr, sum_out);
      out << "wrote " << sum_out << ": " << agg.runs << " runs\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace p2pmatch

#endif  // P2PMATCH_CLI_HPP_
