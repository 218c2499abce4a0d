#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cvr/controls.hpp"
#include "cvr/feeder.hpp"
#include "cvr/lp.hpp"

namespace cvr {

/// LP plus binary markers and symbolic names for columns and rows.
struct MilpProblem {
  LpProblem lp;
  std::vector<int> binaries;
  std::map<std::string, int, std::less<>> names; // column symbol -> index
  std::vector<std::string> col_names;
  std::vector<std::string> row_names;

  int add_variable(const std::string& name, double lo, double hi, double cost = 0.0, bool binary = false);
  int add_row(const std::string& name, std::vector<std::pair<int, double>> coef, RowSense sense, double rhs);
  int column(std::string_view name) const;
  bool is_binary(int col) const;
  /// Rows whose name starts with `prefix`.
  std::size_t count_rows(std::string_view prefix) const;
};

enum class MilpStatus { optimal, infeasible, time_limit, iteration_limit };
std::string to_string(MilpStatus s);

struct MilpSolution {
  MilpStatus status = MilpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;
  bool has_incumbent = false;
  long branches = 0;    // nodes expanded by branching (or LPs solved, for enumeration)
  double elapsed = 0.0; // seconds
};

struct BranchOptions {
  double time_limit = 60.0;
  double abs_gap = 1e-6;
  double integrality_tol = 1e-6;
};

/// Best-first branch and bound on the LP relaxation.
MilpSolution branch_and_bound(const MilpProblem& problem, const BranchOptions& options = {});

/// Discrete choices of a problem: SOS1 groups (rows sum(u) = 1 over binaries) and free binaries.
struct DiscreteStructure {
  std::vector<std::vector<int>> sos1;
  std::vector<int> free_binaries;
  double combinations() const;
};
DiscreteStructure discrete_structure(const MilpProblem& problem);

/// Exhaustive LP solves over every discrete combination. Throws InputError above `max_combinations`.
MilpSolution enumerate_oracle(const MilpProblem& problem, double max_combinations = 1048576.0);

/// Fixed-layout MPS with generated names R0000001/C0000001 in index order.
void write_mps(const MilpProblem& problem, std::ostream& out);

/// Hexagon radius enclosing a circle-equivalent area of radius s_max.
double hexagon_radius(double s_max);

struct MilpOptions {
  double load_scale = 1.0;
  double vmin_margin = 0.0; // tightens [vmin, vmax] by this many pu on both sides
  double q_reserve = 0.0;   // fraction of inverter reactive capability held back from the plan
  bool branch_capacity = true;
};

/// Column layout of the centralized CVR problem; -1 where a phase is absent.
struct CvrMilp {
  MilpProblem problem;
  std::vector<PerPhase<int>> v;   // per bus, squared magnitude
  std::vector<PerPhase<int>> P;   // per line
  std::vector<PerPhase<int>> Q;   // per line
  std::vector<PerPhase<int>> qdg; // per PV
  std::vector<PerPhase<std::vector<int>>> tap; // per regulator, 33 binaries per regulated phase
  std::vector<PerPhase<int>> cap;              // per capacitor switch (gang banks share one column)
  std::vector<PerPhase<int>> cap_w;            // per capacitor, switch times bus voltage
};

/// Builds the centralized CVR MILP for one interval. `forecast` gives per-PV active output.
/// `prev` is accepted for interface symmetry; the objective carries no switching cost.
CvrMilp build_cvr_milp(const FeederModel& model, const std::vector<PerPhase<double>>& forecast,
                       const ControlSetpoints* prev = nullptr, const MilpOptions& options = {});

/// Appends the six hexagon rows per present phase bounding (P, Q) of `line`.
void add_branch_capacity(CvrMilp& milp, const FeederModel& model, std::size_t line);

/// Decodes taps, switches, reactive commands and reference voltages. Throws SolveError on a
/// solution without an incumbent and std::logic_error on fractional binaries.
ControlSetpoints extract_setpoints(const FeederModel& model, const CvrMilp& milp, const MilpSolution& solution);

} // namespace cvr
