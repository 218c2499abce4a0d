#pragma once

#include <vector>

#include <Eigen/Core>

#include "cvr/controls.hpp"
#include "cvr/feeder.hpp"
#include "cvr/oracle.hpp"

namespace cvr {

struct InverterCapability {
  PerPhase<double> s_rated{};
  PerPhase<double> p_now{};

  double qcap(Phase p) const { return reactive_capability(s_rated[index(p)], p_now[index(p)]); }
};

/// Inputs seen by one inverter. Deltas are taken against the interval's planned operating point.
struct LocalMeasurement {
  PhaseSet phases;
  PerPhase<double> dp_local{};
  std::vector<PerPhase<double>> child_dP; // per child line, change in active flow into the child
};

/// Thevenin ratio controller: dq = -(R/X) dp, clamped to the capability box.
/// Throws InputError when X <= 0.
PerPhase<double> impedance_step(Complex zth, const PerPhase<double>& dp_local, const PerPhase<double>& q_prev,
                                const InverterCapability& cap, PhaseSet phases = PhaseSet::all());

/// A = X^-1 R on the present-phase block of the line's flow sensitivities. Zero on absent phases.
/// Throws SolveError when the reactive block is singular.
Eigen::Matrix3d flow_matrix(const Line& line);

/// Flow-measurement controller. The parent line keeps dQ = -A dP while each child line is assumed to
/// do the same with its own matrix.
PerPhase<double> measurement_step(const Eigen::Matrix3d& parent_A, const std::vector<Eigen::Matrix3d>& child_A,
                                  const LocalMeasurement& meas, const PerPhase<double>& q_prev,
                                  const InverterCapability& cap);

/// Thevenin impedance usable by the ratio controller, or nullopt when the unit must stay idle.
std::optional<Complex> controller_impedance(const FeederModel& model, std::size_t bus);

/// |V| - V_ref for every present bus-phase; zero where no reference exists.
std::vector<PerPhase<double>> controller_effectiveness(const FeederModel& model, const ComplexState& state,
                                                       const ControlSetpoints& reference);

} // namespace cvr
