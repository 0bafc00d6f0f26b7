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

// Multi-run experiments. Run r (1-based) draws rewards from
// derive_seed(seed, r). The instance comes from `seed` itself, or from
// derive_seed(mix_seed(seed), r) when resample_instance is set. Results do
// not depend on the number of worker threads.

#ifndef P2PMATCH_EXPERIMENT_HPP_
#define P2PMATCH_EXPERIMENT_HPP_

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "p2pmatch/config.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/random.hpp"
#include "p2pmatch/simulation.hpp"

namespace p2pmatch {

struct ExperimentResult {
  std::vector<MarketInstance> instances;  // one, or one per run when resampling
  std::vector<RunResult> runs;            // ordered by run_id
  AggregateResult aggregate;
};

inline std::uint64_t instance_seed(const ExperimentConfig& config, std::uint64_t run_id) {
  const std::uint64_t seed = config.generation.seed;
  return config.resample_instance ? derive_seed(mix_seed(seed), run_id) : seed;
}

inline std::uint64_t reward_seed(const ExperimentConfig& config, std::uint64_t run_id) {
  return derive_seed(config.generation.seed, run_id);
}

// `fixed` replaces the generated instance (ignored when resampling).
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const std::optional<MarketInstance>& fixed = std::nullopt,
                                       unsigned jobs = 1) {
  check_experiment_config(config);
  ExperimentResult out;
  const std::size_t runs = config.runs;
  if (config.resample_instance) {
    for (std::uint64_t r = 1; r <= runs; ++r) {
      GenerationConfig g = config.generation;
      g.seed = instance_seed(config, r);
      out.instances.push_back(generate_instance(g));
    }
  } else if (fixed.has_value()) {
    require_valid(*fixed);
    out.instances.push_back(*fixed);
  } else {
    out.instances.push_back(generate_instance(config.generation));
  }

  out.runs.resize(runs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < runs; i = next++) {
      try {
        const MarketInstance& inst = out.instances[config.resample_instance ? i : 0];
        const std::uint64_t id = i + 1;
        RunResult r = run_simulation(inst, config.weights, config.reward, config.horizon,
                                     config.solver, reward_seed(config, id), config.regret_mode);
        r.run_id = id;
        out.runs[i] = std::move(r);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = runs;
      }
    }
  };
  const unsigned threads = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(runs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  out.aggregate = aggregate_runs(out.runs);
  return out;
}

}  // namespace p2pmatch

#endif  // P2PMATCH_EXPERIMENT_HPP_
