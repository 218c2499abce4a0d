#pragma once

#include <vector>

#include "cvr/controls.hpp"
#include "cvr/feeder.hpp"

namespace cvr {

/// Solution of the exact unbalanced branch-flow equations.
struct ComplexState {
  std::vector<PerPhase<Complex>> V; // per bus
  std::vector<PerPhase<Complex>> I; // per line, series current
  std::vector<PerPhase<Complex>> S; // per line, sending-end power after any regulator
  int iterations = 0;

  double magnitude(std::size_t bus, Phase p) const { return std::abs(V[bus][index(p)]); }
};

struct SweepOptions {
  double tolerance = 1e-9;
  int max_iterations = 100;
};

/// Lowest voltage magnitude accepted by the ZIP current evaluation.
inline constexpr double kCollapseGuard = 0.4;

/// Current drawn by a ZIP load at complex voltage V. Throws SolveError below the collapse guard.
Complex zip_current(const ZipLoad& load, Complex V, double scale = 1.0);

/// Nominal 120-degree-spaced substation phasor for phase p.
Complex nominal_phasor(Phase p);

/// Backward/forward sweep. Throws SolveError on non-convergence or voltage collapse.
ComplexState sweep_solve(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                         const SweepOptions& options = {});

/// Largest per-phase current mismatch at any non-substation bus.
double kirchhoff_residual(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                          const ComplexState& state);

/// Complex power balance of a solved state (all terms summed over phases, pu).
struct PowerAudit {
  Complex source;     // leaving the substation
  Complex load;       // consumed by loads
  Complex losses;     // series losses
  Complex pv;         // injected by PV units
  Complex capacitors; // injected by capacitors (imaginary)
};

PowerAudit power_audit(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                       const ComplexState& state);

} // namespace cvr
