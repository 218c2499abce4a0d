#include "cvr/local_control.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "cvr/linear_pf.hpp"

namespace cvr {

namespace {

double clamp_q(double q, double qcap) { return std::clamp(q, -qcap, qcap); }

} // namespace

PerPhase<double> impedance_step(Complex zth, const PerPhase<double>& dp_local, const PerPhase<double>& q_prev,
                                const InverterCapability& cap, PhaseSet phases) {
  if (!(zth.imag() > 0.0)) throw InputError("Thevenin reactance must be positive");
  const double ratio = zth.real() / zth.imag();
  PerPhase<double> q{};
  for (Phase p : kAllPhases) {
    if (!phases.has(p)) continue;
    q[index(p)] = clamp_q(q_prev[index(p)] - ratio * dp_local[index(p)], cap.qcap(p));
  }
  return q;
}

Eigen::Matrix3d flow_matrix(const Line& line) {
  const LineCoefficients h = line_coefficients(line);
  std::vector<int> idx;
  for (Phase p : kAllPhases)
    if (line.phases.has(p)) idx.push_back(index(p));
  const int n = static_cast<int>(idx.size());
  Eigen::MatrixXd R(n, n), X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      R(i, j) = h.HP(idx[i], idx[j]);
      X(i, j) = h.HQ(idx[i], idx[j]);
    }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(X);
  if (n == 0 || !lu.isInvertible()) throw SolveError("reactive sensitivity block of line '" + line.id + "' is singular");
  const Eigen::MatrixXd A = lu.solve(R);
  Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(idx[i], idx[j]) = A(i, j);
  return out;
}

PerPhase<double> measurement_step(const Eigen::Matrix3d& parent_A, const std::vector<Eigen::Matrix3d>& child_A,
                                  const LocalMeasurement& meas, const PerPhase<double>& q_prev,
                                  const InverterCapability& cap) {
  if (child_A.size() != meas.child_dP.size()) throw InputError("child matrices do not match child measurements");
  // Parent flow change: dP_line = -dp_local + sum dP_child; the inverter covers what the children do not.
  Eigen::Vector3d dp = Eigen::Vector3d::Zero(), child_sum = Eigen::Vector3d::Zero(), child_q = Eigen::Vector3d::Zero();
  for (Phase p : kAllPhases)
    if (meas.phases.has(p)) dp[index(p)] = meas.dp_local[index(p)];
  for (std::size_t c = 0; c < child_A.size(); ++c) {
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    for (Phase p : kAllPhases)
      if (meas.phases.has(p)) d[index(p)] = meas.child_dP[c][index(p)];
    child_sum += d;
    child_q += child_A[c] * d;
  }
  const Eigen::Vector3d dq = -parent_A * dp + parent_A * child_sum - child_q;
  PerPhase<double> q{};
  for (Phase p : kAllPhases) {
    if (!meas.phases.has(p)) continue;
    q[index(p)] = clamp_q(q_prev[index(p)] + dq[index(p)], cap.qcap(p));
  }
  return q;
}

std::optional<Complex> controller_impedance(const FeederModel& model, std::size_t bus) {
  Complex z = thevenin_impedance(model, bus);
  if (z.imag() > 0.0) return z;
  if (!model.has_parent(bus)) return std::nullopt;
  const Line& line = model.lines[model.parent_line(bus)];
  double x = 0.0;
  for (Phase p : kAllPhases)
    if (line.phases.has(p)) x = std::max(x, line.z(index(p), index(p)).imag());
  if (x > 0.0) return Complex(z.real(), x);
  return std::nullopt;
}

std::vector<PerPhase<double>> controller_effectiveness(const FeederModel& model, const ComplexState& state,
                                                       const ControlSetpoints& reference) {
  std::vector<PerPhase<double>> dev(model.buses.size(), PerPhase<double>{});
  if (reference.v_ref.empty()) return dev;
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (model.buses[b].phases.has(p)) dev[b][index(p)] = state.magnitude(b, p) - reference.v_ref[b][index(p)];
  return dev;
}

} // namespace cvr
