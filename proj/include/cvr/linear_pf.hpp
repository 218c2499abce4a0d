#pragma once

#include <vector>

#include <Eigen/Core>

#include "cvr/controls.hpp"
#include "cvr/feeder.hpp"

namespace cvr {

struct CvrFactors {
  double p = 0.0;
  double q = 0.0;
};

/// CVR factors from ZIP coefficients: 2 k1 + k2. Throws InputError when a triple does not sum to 1.
CvrFactors cvr_from_zip(const std::array<double, 3>& kp, const std::array<double, 3>& kq);

/// Load linear in squared voltage: p = p0 (1 + cvr_p/2 (v - 1)).
struct CvrLoadModel {
  double p0 = 0.0;
  double q0 = 0.0;
  double cvr_p = 0.0;
  double cvr_q = 0.0;

  static CvrLoadModel from_zip(const ZipLoad& load, double scale = 1.0);
};

struct PowerPair {
  double p = 0.0;
  double q = 0.0;
};

PowerPair cvr_load_eval(const CvrLoadModel& m, double v_squared);

/// ZIP polynomial evaluated at voltage magnitude `v` (pu), nominal voltage 1 pu.
PowerPair zip_power(const ZipLoad& load, double v, double scale = 1.0);

/// Voltage-drop sensitivities of one line: (v_from - v_to) over phases = HP P + HQ Q.
struct LineCoefficients {
  Eigen::Matrix3d HP = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d HQ = Eigen::Matrix3d::Zero();
};

LineCoefficients line_coefficients(const Line& line);

struct LinearPfSolution {
  std::vector<PerPhase<double>> v;      // per bus, squared magnitude (pu^2)
  std::vector<PerPhase<double>> P, Q;   // per line, sending-end flow (pu)
  std::vector<PowerPair> load;          // per load, realized demand
  std::vector<PerPhase<double>> cap_q;  // per capacitor, injected reactive power
  int iterations = 0;

  double magnitude(std::size_t bus, Phase p) const;
};

/// Solves the lossless linear branch-flow model. Voltage-dependent loads and capacitors are
/// handled by fixed-point iteration from a flat start. Throws SolveError on non-convergence.
LinearPfSolution solve_linear_pf(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls);

/// Largest power-balance and voltage-equation residuals of a solution.
struct LinearResiduals {
  double balance = 0.0;
  double voltage = 0.0;
};
LinearResiduals linear_residuals(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                                 const LinearPfSolution& sol);

struct OracleComparison {
  double max_dv = 0.0;       // pu magnitude
  double max_ds_pct = 0.0;   // percent of the oracle's apparent flow
};

/// Compares the linear model with the nonlinear sweep at the same conditions.
OracleComparison compare_with_oracle(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls);

} // namespace cvr
