#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace cvr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSense { le, eq, ge };

struct LpRow {
  std::vector<std::pair<int, double>> coef; // (column, value), no duplicate columns
  RowSense sense = RowSense::le;
  double rhs = 0.0;
};

/// min c'x  s.t.  rows,  lower <= x <= upper.
struct LpProblem {
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<LpRow> rows;

  int num_cols() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  int add_variable(double lo, double hi, double c = 0.0);
  int add_row(std::vector<std::pair<int, double>> coef, RowSense sense, double rhs);

  /// Row activity a_i'x for every row.
  std::vector<double> activity(const std::vector<double>& x) const;
  /// Largest bound or row violation of x.
  double max_violation(const std::vector<double>& x) const;

  /// Throws InputError on infinite column bounds, lower > upper, or duplicate entries.
  void validate() const;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;             // structural values
  std::vector<double> duals;         // per row
  std::vector<double> reduced_costs; // per structural column
  int iterations = 0;
};

struct LpOptions {
  double primal_tol = 1e-9;
  double dual_tol = 1e-9;
  int max_iterations = 200000;
  int refactor_period = 64;
};

/// Bounded-variable revised simplex (two phases, sparse LU with product-form updates).
LpSolution solve_lp(const LpProblem& problem, const LpOptions& options = {});

/// Same problem with the column bounds replaced.
LpSolution solve_lp(const LpProblem& problem, const std::vector<double>& lower, const std::vector<double>& upper,
                    const LpOptions& options = {});

} // namespace cvr
