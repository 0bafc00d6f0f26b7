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

// Dense bounded simplex for small LPs, with warm restarts after bound
// changes.
//
// Every column carries lower/upper bounds and nonbasic columns sit at one of
// them, so 0/1 boxes never become rows. Each row gets a slack whose bounds
// encode the row sense. The starting basis is slack-or-singleton: a row takes
// its slack if that value is within bounds, else a structural column that
// appears only in that row, else an artificial. Only rows that fall through
// to artificials cost phase-1 work.
//
// After an optimal solve, set_bounds() may tighten columns and reoptimize()
// restores optimality with the dual simplex (the old basis stays dual
// feasible), followed by a primal cleanup pass. Basic values are recomputed
// from B^-1 (the slack columns of the tableau) around every restart, so
// rounding error does not accumulate across warm starts.

#ifndef P2PMATCH_SIMPLEX_HPP_
#define P2PMATCH_SIMPLEX_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "p2pmatch/common.hpp"

namespace p2pmatch::lp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class RowSense { kLessEqual, kGreaterEqual, kEqual };

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

struct Term {
  std::size_t column;
  double coefficient;
};

// max cost' x  s.t.  row_i(x) {<=, >=, =} rhs_i,  lower <= x <= upper.
class LinearProgram {
 public:
  std::size_t add_column(double cost, double lower, double upper) {
    cost_.push_back(cost);
    lower_.push_back(lower);
    upper_.push_back(upper);
    return cost_.size() - 1;
  }

  void add_row(std::vector<Term> terms, RowSense sense, double rhs) {
    rows_.push_back({std::move(terms), sense, rhs});
  }

  void set_bounds(std::size_t column, double lower, double upper) {
    lower_[column] = lower;
    upper_[column] = upper;
  }

  std::size_t num_columns() const { return cost_.size(); }
  std::size_t num_rows() const { return rows_.size(); }

 private:
  struct Row {
    std::vector<Term> terms;
    RowSense sense;
    double rhs;
  };

  std::vector<double> cost_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<Row> rows_;

  friend class DenseSimplex;
};

struct LpOptions {
  double pivot_tolerance = 1e-9;
  double feasibility_tolerance = 1e-9;
  double optimality_tolerance = 1e-9;
  // Per call to solve()/reoptimize(); 0 picks a limit from the tableau size.
  long max_iterations = 0;
};

struct LpSolution {
  LpStatus status = LpStatus::kIterationLimit;
  double objective = 0.0;
  std::vector<double> values;
  long iterations = 0;
};

// Copyable: a copy is an independent snapshot of the basis and tableau.
class DenseSimplex {
 public:
  DenseSimplex(const LinearProgram& program, const LpOptions& options = {})
      : options_(options) {
    build(program);
  }

  LpStatus solve() {
    if (num_artificial_ > 0) {
      std::vector<double> phase1(num_total_, 0.0);
      for (std::size_t j = first_artificial_; j < num_total_; ++j) phase1[j] = -1.0;
      status_ = primal(phase1);
      if (status_ != LpStatus::kOptimal) return status_;
      double infeasibility = 0.0;
      for (std::size_t i = 0; i < num_rows_; ++i) {
        if (basis_[i] >= first_artificial_) infeasibility += beta_[i];
      }
      for (std::size_t j = first_artificial_; j < num_total_; ++j) {
        if (!is_basic_[j]) infeasibility += nonbasic_value(j);
      }
      if (infeasibility > options_.feasibility_tolerance * (1.0 + scale_)) {
        return status_ = LpStatus::kInfeasible;
      }
      for (std::size_t j = first_artificial_; j < num_total_; ++j) {
        upper_[j] = 0.0;
        at_upper_[j] = false;
      }
    }
    status_ = primal(cost_);
    if (status_ == LpStatus::kOptimal) refresh_basic_values();
    return status_;
  }

  // Only valid between solves; a nonbasic column keeps its side of the box
  // unless the new box is a single point.
  void set_bounds(std::size_t column, double lower, double upper) {
    lower_[column] = lower;
    upper_[column] = upper;
    if (!is_basic_[column] && lower == upper) at_upper_[column] = false;
  }

  // Restores optimality after set_bounds() on a previously optimal basis.
  LpStatus reoptimize() {
    refresh_basic_values();
    status_ = dual();
    if (status_ != LpStatus::kOptimal) return status_;
    status_ = primal(cost_);
    if (status_ != LpStatus::kOptimal) return status_;
    refresh_basic_values();
    if (max_violation() > 10.0 * options_.feasibility_tolerance * (1.0 + scale_)) {
      status_ = dual();
    }
    return status_;
  }

  LpStatus status() const { return status_; }

  // Reduced cost of a column at the last optimum, and where it sits.
  double reduced_cost(std::size_t column) const { return reduced_[column]; }
  bool is_basic(std::size_t column) const { return is_basic_[column]; }
  bool at_upper(std::size_t column) const { return at_upper_[column]; }

  // Approximate heap size of a copy, in bytes.
  std::size_t footprint() const {
    return tableau_.size() * sizeof(double) +
           (cost_.size() + reduced_.size() + lower_.size() + upper_.size()) *
               sizeof(double) +
           basis_.size() * sizeof(std::size_t);
  }
  long iterations() const { return iterations_; }

  std::vector<double> values() const {
    std::vector<double> out(num_structural_, 0.0);
    for (std::size_t j = 0; j < num_structural_; ++j) {
      if (!is_basic_[j]) out[j] = nonbasic_value(j);
    }
    for (std::size_t i = 0; i < num_rows_; ++i) {
      if (basis_[i] < num_structural_) out[basis_[i]] = beta_[i];
    }
    return out;
  }

  double objective() const {
    const std::vector<double> x = values();
    double total = 0.0;
    for (std::size_t j = 0; j < num_structural_; ++j) total += cost_[j] * x[j];
    return total;
  }

 private:
  double& cell(std::size_t row, std::size_t col) {
    return tableau_[row * num_total_ + col];
  }
  double cell(std::size_t row, std::size_t col) const {
    return tableau_[row * num_total_ + col];
  }

  double nonbasic_value(std::size_t j) const {
    return at_upper_[j] ? upper_[j] : lower_[j];
  }

  long iteration_cap() const {
    return options_.max_iterations > 0
               ? options_.max_iterations
               : static_cast<long>(50 * (num_rows_ + num_total_) + 1000);
  }

  void build(const LinearProgram& program) {
    num_structural_ = program.num_columns();
    num_rows_ = program.num_rows();
    const std::size_t n = num_structural_;
    const std::size_t m = num_rows_;

    std::vector<std::size_t> occurrences(n, 0);
    for (const auto& row : program.rows_) {
      for (const Term& t : row.terms) {
        if (t.coefficient != 0.0) ++occurrences[t.column];
      }
    }

    lower_ = program.lower_;
    upper_ = program.upper_;
    at_upper_.assign(n, false);
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(lower_[j])) {
        if (!std::isfinite(upper_[j])) {
          throw Error(ErrorCode::kInvalidArgument, "free columns are not supported");
        }
        at_upper_[j] = true;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      const RowSense sense = program.rows_[i].sense;
      lower_.push_back(sense == RowSense::kGreaterEqual ? -kInfinity : 0.0);
      upper_.push_back(sense == RowSense::kLessEqual ? kInfinity : 0.0);
      at_upper_.push_back(sense == RowSense::kGreaterEqual);
    }

    std::vector<std::size_t> basic(m);
    std::vector<double> basic_coef(m, 1.0);
    std::vector<double> basic_value(m);
    std::vector<std::size_t> artificial_rows;
    std::vector<double> artificial_sign;
    std::vector<bool> used(n, false);
    scale_ = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& row = program.rows_[i];
      double activity = 0.0;
      for (const Term& t : row.terms) {
        activity += t.coefficient * nonbasic_value(t.column);
      }
      const double res = row.rhs - activity;
      scale_ = std::max(scale_, std::abs(row.rhs));
      const std::size_t slack = n + i;
      if (res >= lower_[slack] - options_.feasibility_tolerance &&
          res <= upper_[slack] + options_.feasibility_tolerance) {
        basic[i] = slack;
        basic_value[i] = res;
        continue;
      }
      bool found = false;
      for (const Term& t : row.terms) {
        const std::size_t j = t.column;
        if (used[j] || occurrences[j] != 1 || t.coefficient == 0.0) continue;
        const double value = nonbasic_value(j) + res / t.coefficient;
        if (value >= lower_[j] - options_.feasibility_tolerance &&
            value <= upper_[j] + options_.feasibility_tolerance) {
          basic[i] = j;
          basic_coef[i] = t.coefficient;
          basic_value[i] = value;
          used[j] = true;
          found = true;
          break;
        }
      }
      if (!found) {
        basic_value[i] = std::abs(res);
        artificial_rows.push_back(i);
        artificial_sign.push_back(res >= 0.0 ? 1.0 : -1.0);
      }
    }

    num_artificial_ = artificial_rows.size();
    first_artificial_ = n + m;
    num_total_ = n + m + num_artificial_;
    for (std::size_t a = 0; a < num_artificial_; ++a) {
      lower_.push_back(0.0);
      upper_.push_back(kInfinity);
      at_upper_.push_back(false);
      basic[artificial_rows[a]] = first_artificial_ + a;
      basic_coef[artificial_rows[a]] = artificial_sign[a];
    }

    // Original rows, kept for recomputing basic values; shared by copies.
    auto rows = std::make_shared<std::vector<std::vector<Term>>>(m);
    auto rhs = std::make_shared<std::vector<double>>(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      (*rows)[i] = program.rows_[i].terms;
      (*rows)[i].push_back({n + i, 1.0});
      (*rhs)[i] = program.rows_[i].rhs;
    }
    for (std::size_t a = 0; a < num_artificial_; ++a) {
      (*rows)[artificial_rows[a]].push_back({first_artificial_ + a, artificial_sign[a]});
    }
    rows_ = std::move(rows);
    rhs_ = std::move(rhs);

    tableau_.assign(m * num_total_, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (const Term& t : (*rows_)[i]) cell(i, t.column) += t.coefficient;
      const double inv = 1.0 / basic_coef[i];
      if (inv != 1.0) {
        for (std::size_t j = 0; j < num_total_; ++j) cell(i, j) *= inv;
      }
    }

    cost_.assign(num_total_, 0.0);
    for (std::size_t j = 0; j < n; ++j) cost_[j] = program.cost_[j];
    basis_ = basic;
    beta_ = basic_value;
    is_basic_.assign(num_total_, false);
    for (std::size_t i = 0; i < m; ++i) is_basic_[basis_[i]] = true;
  }

  // beta = B^-1 (rhs - N x_N). Column n+i of the tableau is B^-1 e_i.
  void refresh_basic_values() {
    const std::size_t m = num_rows_;
    std::vector<double> residual(*rhs_);
    for (std::size_t i = 0; i < m; ++i) {
      for (const Term& t : (*rows_)[i]) {
        if (!is_basic_[t.column]) residual[i] -= t.coefficient * nonbasic_value(t.column);
      }
    }
    nonzero_.clear();
    for (std::size_t r = 0; r < m; ++r) {
      if (residual[r] != 0.0) nonzero_.push_back(r);
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = &tableau_[i * num_total_ + num_structural_];
      double v = 0.0;
      for (const std::size_t r : nonzero_) v += row[r] * residual[r];
      beta_[i] = v;
    }
  }

  double max_violation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < num_rows_; ++i) {
      const std::size_t var = basis_[i];
      worst = std::max({worst, lower_[var] - beta_[i], beta_[i] - upper_[var]});
    }
    return worst;
  }

  void compute_reduced(const std::vector<double>& cost) {
    reduced_ = cost;
    for (std::size_t i = 0; i < num_rows_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = &tableau_[i * num_total_];
      for (std::size_t j = 0; j < num_total_; ++j) reduced_[j] -= cb * row[j];
    }
    for (std::size_t i = 0; i < num_rows_; ++i) reduced_[basis_[i]] = 0.0;
  }

  void swap_basis(std::size_t r, std::size_t entering, double entering_value,
                  bool leaving_at_upper) {
    const std::size_t leaving = basis_[r];
    at_upper_[leaving] = leaving_at_upper;
    is_basic_[leaving] = false;
    is_basic_[entering] = true;
    basis_[r] = entering;
    beta_[r] = entering_value;
    pivot(r, entering);
  }

  LpStatus primal(const std::vector<double>& cost) {
    const std::size_t m = num_rows_;
    compute_reduced(cost);
    const long cap = iteration_cap();
    long local = 0;
    int degenerate_run = 0;
    bool bland = false;
    while (true) {
      if (local++ >= cap) return LpStatus::kIterationLimit;

      std::size_t entering = num_total_;
      double best = 0.0;
      int direction = 0;
      for (std::size_t j = 0; j < num_total_; ++j) {
        if (is_basic_[j] || !(lower_[j] < upper_[j])) continue;
        const double d = reduced_[j];
        int dir = 0;
        if (d > options_.optimality_tolerance && !at_upper_[j]) dir = 1;
        if (d < -options_.optimality_tolerance && at_upper_[j]) dir = -1;
        if (dir == 0) continue;
        if (bland) {
          entering = j;
          direction = dir;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          entering = j;
          direction = dir;
        }
      }
      if (entering == num_total_) return LpStatus::kOptimal;

      double step = upper_[entering] - lower_[entering];
      std::size_t leaving_row = m;
      double leaving_alpha = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double alpha = cell(i, entering);
        if (std::abs(alpha) <= options_.pivot_tolerance) continue;
        const double delta = -direction * alpha;
        const std::size_t var = basis_[i];
        double limit;
        if (delta < 0.0) {
          if (!std::isfinite(lower_[var])) continue;
          limit = (beta_[i] - lower_[var]) / -delta;
        } else {
          if (!std::isfinite(upper_[var])) continue;
          limit = (upper_[var] - beta_[i]) / delta;
        }
        limit = std::max(limit, 0.0);
        bool take;
        if (leaving_row == m) {
          take = limit < step;
        } else if (limit < step - 1e-12) {
          take = true;
        } else if (limit <= step + 1e-12) {
          take = bland ? var < basis_[leaving_row]
                       : std::abs(alpha) > std::abs(leaving_alpha);
        } else {
          take = false;
        }
        if (take) {
          step = std::min(step, limit);
          leaving_row = i;
          leaving_alpha = alpha;
        }
      }
      if (!std::isfinite(step)) return LpStatus::kUnbounded;
      ++iterations_;

      if (step <= 1e-12) {
        if (++degenerate_run > 30) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      const double entering_value = nonbasic_value(entering) + direction * step;
      if (step != 0.0) {
        for (std::size_t i = 0; i < m; ++i) {
          const double alpha = cell(i, entering);
          if (alpha != 0.0) beta_[i] -= direction * alpha * step;
        }
      }
      if (leaving_row == m) {
        at_upper_[entering] = !at_upper_[entering];  // bound flip
        continue;
      }
      swap_basis(leaving_row, entering, entering_value,
                 -direction * leaving_alpha > 0.0);
    }
  }

  // Dual simplex on the current basis; assumes reduced_ is dual feasible.
  LpStatus dual() {
    const std::size_t m = num_rows_;
    const long cap = iteration_cap();
    long local = 0;
    const double feas_tol = options_.feasibility_tolerance * (1.0 + scale_);
    while (true) {
      if (local++ >= cap) return LpStatus::kIterationLimit;

      std::size_t r = m;
      double worst = feas_tol;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t var = basis_[i];
        const double viol = std::max(lower_[var] - beta_[i], beta_[i] - upper_[var]);
        if (viol > worst) {
          worst = viol;
          r = i;
        }
      }
      if (r == m) return LpStatus::kOptimal;

      const std::size_t leaving = basis_[r];
      const bool below = beta_[r] < lower_[leaving];
      const double target = below ? lower_[leaving] : upper_[leaving];

      std::size_t entering = num_total_;
      double best_ratio = kInfinity;
      double best_alpha = 0.0;
      for (std::size_t j = 0; j < num_total_; ++j) {
        if (is_basic_[j] || !(lower_[j] < upper_[j])) continue;
        const double alpha = cell(r, j);
        if (std::abs(alpha) <= options_.pivot_tolerance) continue;
        // x_B[r] moves by -alpha per unit increase of x_j.
        const bool increases_basic = at_upper_[j] ? alpha > 0.0 : alpha < 0.0;
        if (increases_basic != below) continue;
        const double ratio = std::abs(reduced_[j]) / std::abs(alpha);
        if (ratio < best_ratio - 1e-12 ||
            (ratio <= best_ratio + 1e-12 && std::abs(alpha) > std::abs(best_alpha))) {
          best_ratio = std::min(best_ratio, ratio);
          entering = j;
          best_alpha = alpha;
        }
      }
      if (entering == num_total_) return LpStatus::kInfeasible;
      ++iterations_;

      const double move = (beta_[r] - target) / best_alpha;
      for (std::size_t i = 0; i < m; ++i) {
        const double alpha = cell(i, entering);
        if (alpha != 0.0) beta_[i] -= alpha * move;
      }
      const double entering_value = nonbasic_value(entering) + move;
      swap_basis(r, entering, entering_value, !below);
    }
  }

  void pivot(std::size_t r, std::size_t col) {
    double* prow = &tableau_[r * num_total_];
    const double inv = 1.0 / prow[col];
    nonzero_.clear();
    for (std::size_t j = 0; j < num_total_; ++j) {
      if (prow[j] != 0.0) {
        prow[j] *= inv;
        nonzero_.push_back(j);
      }
    }
    prow[col] = 1.0;
    for (std::size_t i = 0; i < num_rows_; ++i) {
      if (i == r) continue;
      double* row = &tableau_[i * num_total_];
      const double f = row[col];
      if (f == 0.0) continue;
      for (const std::size_t j : nonzero_) row[j] -= f * prow[j];
      row[col] = 0.0;
    }
    const double f = reduced_[col];
    if (f != 0.0) {
      for (const std::size_t j : nonzero_) reduced_[j] -= f * prow[j];
      reduced_[col] = 0.0;
    }
  }

  LpOptions options_;
  std::size_t num_structural_ = 0;
  std::size_t num_rows_ = 0;
  std::size_t num_artificial_ = 0;
  std::size_t first_artificial_ = 0;
  std::size_t num_total_ = 0;
  std::shared_ptr<const std::vector<std::vector<Term>>> rows_;
  std::shared_ptr<const std::vector<double>> rhs_;
  std::vector<double> tableau_;
  std::vector<double> cost_;
  std::vector<double> reduced_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<bool> at_upper_;
  std::vector<bool> is_basic_;
  std::vector<std::size_t> basis_;
  std::vector<double> beta_;
  std::vector<std::size_t> nonzero_;  // scratch for pivot()
  double scale_ = 0.0;
  long iterations_ = 0;
  LpStatus status_ = LpStatus::kIterationLimit;
};

inline LpSolution solve(const LinearProgram& program, const LpOptions& options = {}) {
  DenseSimplex simplex(program, options);
  LpSolution out;
  out.status = simplex.solve();
  out.iterations = simplex.iterations();
  if (out.status == LpStatus::kOptimal) {
    out.values = simplex.values();
    out.objective = simplex.objective();
  }
  return out;
}

}  // namespace p2pmatch::lp

#endif  // P2PMATCH_SIMPLEX_HPP_
