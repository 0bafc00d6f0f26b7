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

// File formats: instances (hex floats, exact), per-step traces (CSV) and
// experiment summaries (JSON). Ids in CSV and JSON are 1-based.

#ifndef P2PMATCH_IO_HPP_
#define P2PMATCH_IO_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "p2pmatch/common.hpp"
#include "p2pmatch/config.hpp"
#include "p2pmatch/market.hpp"
#include "p2pmatch/simulation.hpp"

namespace p2pmatch {

inline constexpr std::string_view kTraceHeader =
    "run_id,t,lender_id,matched_borrower,reward,cumulative_regret";

namespace internal {

inline std::string hex_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline std::string csv_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path + "' failed");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : in_{std::string(text)} {}

  std::string word(const char* what) {
    std::string w;
    if (!(in_ >> w)) throw Error(ErrorCode::kParseError, std::string("missing ") + what);
    return w;
  }

  void expect(const char* keyword) {
    const std::string w = word(keyword);
    if (w != keyword) {
      throw Error(ErrorCode::kParseError,
                  std::string("expected '") + keyword + "', got '" + w + "'");
    }
  }

  std::size_t count(const char* what) {
    const std::string w = word(what);
    return parse_number<std::size_t>(what, w);
  }

  // strtod reads both hex and decimal forms.
  double real(const char* what) {
    const std::string w = word(what);
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) {
      throw Error(ErrorCode::kParseError, std::string("bad number for ") + what + ": '" + w + "'");
    }
    return v;
  }

  bool done() {
    std::string w;
    return !(in_ >> w);
  }

 private:
  std::istringstream in_;
};

}  // namespace internal

// Instance text format:
//   p2pmatch-instance 1
//   borrowers K
//   lenders N
//   capacity c_1 .. c_K
//   budget q_1 .. q_N
//   lender_utility   (N rows of K)
//   borrower_utility (K rows of N)
inline std::string serialize_instance(const MarketInstance& instance) {
  using internal::hex_real;
  std::ostringstream out;
  out << "p2pmatch-instance 1\n"
      << "borrowers " << instance.num_borrowers << '\n'
      << "lenders " << instance.num_lenders << '\n'
      << "capacity";
  for (double c : instance.capacity) out << ' ' << hex_real(c);
  out << "\nbudget";
  for (double q : instance.budget) out << ' ' << hex_real(q);
  auto matrix = [&](const char* name, const Matrix<double>& m) {
    out << '\n' << name;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out << '\n';
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << hex_real(m(r, c));
    }
  };
  matrix("lender_utility", instance.lender_utility);
  matrix("borrower_utility", instance.borrower_utility);
  out << '\n';
  return out.str();
}

inline MarketInstance parse_instance(std::string_view text) {
  internal::TokenReader in(text);
  in.expect("p2pmatch-instance");
  if (in.word("format version") != "1") {
    throw Error(ErrorCode::kParseError, "unsupported instance format version");
  }
  MarketInstance inst;
  in.expect("borrowers");
  inst.num_borrowers = in.count("borrowers");
  in.expect("lenders");
  inst.num_lenders = in.count("lenders");
  const std::size_t k = inst.num_borrowers;
  const std::size_t n = inst.num_lenders;
  in.expect("capacity");
  for (std::size_t b = 0; b < k; ++b) inst.capacity.push_back(in.real("capacity"));
  in.expect("budget");
  for (std::size_t l = 0; l < n; ++l) inst.budget.push_back(in.real("budget"));
  in.expect("lender_utility");
  inst.lender_utility = Matrix<double>(n, k);
  for (double& v : inst.lender_utility.data()) v = in.real("lender_utility");
  in.expect("borrower_utility");
  inst.borrower_utility = Matrix<double>(k, n);
  for (double& v : inst.borrower_utility.data()) v = in.real("borrower_utility");
  if (!in.done()) throw Error(ErrorCode::kParseError, "trailing data after instance");
  return inst;
}

inline void write_instance(const MarketInstance& instance, const std::string& path) {
  internal::write_text(path, serialize_instance(instance));
}

inline MarketInstance read_instance(const std::string& path) {
  return parse_instance(internal::read_text(path));
}

// One row per (t, lender) of each run, runs in the given order.
inline std::string trace_csv(const std::vector<RunResult>& results) {
  using internal::csv_real;
  std::string out(kTraceHeader);
  out += '\n';
  for (const RunResult& r : results) {
    const std::size_t n = r.trace.cumulative.rows();
    for (std::size_t s = 0; s < r.records.size(); ++s) {
      const StepRecord& rec = r.records[s];
      for (std::size_t l = 0; l < n; ++l) {
        out += std::to_string(r.run_id);
        out += ',';
        out += std::to_string(rec.t);
        out += ',';
        out += std::to_string(l + 1);
        out += ',';
        if (rec.matched[l]) out += std::to_string(*rec.matched[l] + 1);
        out += ',';
        out += csv_real(rec.reward[l]);
        out += ',';
        out += csv_real(r.trace.cumulative(l, s));
        out += '\n';
      }
    }
  }
  return out;
}

inline void write_trace_csv(const RunResult& result, const std::string& path) {
  internal::write_text(path, trace_csv({result}));
}

inline void write_trace_csv(const std::vector<RunResult>& results, const std::string& path) {
  internal::write_text(path, trace_csv(results));
}

struct TraceRow {
  std::uint64_t run_id = 0;
  std::uint64_t t = 0;
  std::size_t lender_id = 0;                      // 1-based
  std::optional<std::size_t> matched_borrower;    // 1-based
  double reward = 0.0;
  double cumulative_regret = 0.0;
};

inline std::vector<TraceRow> parse_trace_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw Error(ErrorCode::kParseError, "trace CSV header must be '" + std::string(kTraceHeader) + "'");
  }
  std::vector<TraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != 6) throw Error(ErrorCode::kParseError, where + ": expected 6 fields");
    try {
      TraceRow row;
      row.run_id = internal::parse_number<std::uint64_t>("run_id", cells[0]);
      row.t = internal::parse_number<std::uint64_t>("t", cells[1]);
      row.lender_id = internal::parse_number<std::size_t>("lender_id", cells[2]);
      if (!cells[3].empty()) {
        row.matched_borrower = internal::parse_number<std::size_t>("matched_borrower", cells[3]);
      }
      row.reward = internal::parse_number<double>("reward", cells[4]);
      row.cumulative_regret = internal::parse_number<double>("cumulative_regret", cells[5]);
      rows.push_back(row);
    } catch (const Error& e) {
      throw Error(ErrorCode::kParseError, where + ": " + e.what());
    }
  }
  return rows;
}

inline std::vector<TraceRow> read_trace_csv(const std::string& path) {
  return parse_trace_csv(internal::read_text(path));
}

// Rebuilds per-run cumulative regret from trace rows, for aggregate_runs.
// Runs are keyed by run_id; every run must cover the same t x lender grid.
inline std::vector<RunResult> runs_from_trace(const std::vector<TraceRow>& rows) {
  std::map<std::uint64_t, std::vector<const TraceRow*>> by_run;
  std::size_t n = 0;
  std::uint64_t horizon = 0;
  for (const TraceRow& row : rows) {
    if (row.lender_id < 1 || row.t < 1) {
      throw Error(ErrorCode::kShapeMismatch, "trace ids must be 1-based");
    }
    by_run[row.run_id].push_back(&row);
    n = std::max(n, row.lender_id);
    horizon = std::max(horizon, row.t);
  }
  std::vector<RunResult> runs;
  for (const auto& [id, list] : by_run) {
    if (list.size() != n * horizon) {
      throw Error(ErrorCode::kShapeMismatch,
                  "run " + std::to_string(id) + " does not cover every step and lender");
    }
    RunResult r;
    r.run_id = id;
    r.trace.cumulative = Matrix<double>(n, horizon, 0.0);
    Matrix<std::uint8_t> filled(n, horizon, 0);
    for (const TraceRow* row : list) {
      const std::size_t l = row->lender_id - 1;
      const std::size_t s = row->t - 1;
      if (filled(l, s)) {
        throw Error(ErrorCode::kShapeMismatch, "run " + std::to_string(id) + " repeats a row");
      }
      filled(l, s) = 1;
      r.trace.cumulative(l, s) = row->cumulative_regret;
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

// Summary document; field meanings are listed in the README.
inline nlohmann::ordered_json summary_json(const AggregateResult& agg,
                                           const ExperimentConfig* config) {
  nlohmann::ordered_json doc;
  doc["format"] = "p2pmatch-summary";
  doc["version"] = 1;
  if (config != nullptr) {
    const GenerationConfig& g = config->generation;
    nlohmann::ordered_json c;
    c["k"] = g.num_borrowers;
    c["n"] = g.num_lenders;
    c["c_min"] = g.capacity_min;
    c["c_max"] = g.capacity_max;
    c["q_min"] = g.budget_min;
    c["q_max"] = g.budget_max;
    c["lambda1"] = config->weights.lambda1;
    c["lambda2"] = config->weights.lambda2;
    c["horizon"] = config->horizon;
    c["runs"] = config->runs;
    c["seed"] = g.seed;
    c["reward_family"] = to_string(config->reward.family);
    c["reward_sigma"] = config->reward.sigma;
    c["regret_mode"] = to_string(config->regret_mode);
    c["solver_mode"] = solver_mode_name(config->solver);
    c["node_limit"] = config->solver.node_limit;
    c["resample_instance"] = config->resample_instance;
    c["out_dir"] = config->out_dir;
    doc["config"] = std::move(c);
  } else {
    doc["config"] = nullptr;
  }
  doc["runs"] = agg.runs;
  doc["horizon"] = agg.horizon;
  doc["num_lenders"] = agg.num_lenders;
  nlohmann::ordered_json lenders = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < agg.num_lenders; ++l) {
    nlohmann::ordered_json entry;
    entry["lender_id"] = l + 1;
    entry["terminal_regret_mean"] = agg.terminal_mean[l];
    entry["terminal_regret_std"] = agg.terminal_std[l];
    entry["terminal_slope"] = agg.terminal_slope[l];
    lenders.push_back(std::move(entry));
  }
  doc["lenders"] = std::move(lenders);
  nlohmann::ordered_json solver;
  solver["total_nodes"] = agg.total_nodes;
  solver["fallback_steps"] = agg.fallback_steps;
  doc["solver"] = std::move(solver);
  return doc;
}

inline void write_summary_json(const AggregateResult& agg, const ExperimentConfig* config,
                               const std::string& path) {
  internal::write_text(path, summary_json(agg, config).dump(2) + "\n");
}

}  // namespace p2pmatch

#endif  // P2PMATCH_IO_HPP_
