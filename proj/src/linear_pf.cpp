#include "cvr/linear_pf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cvr/oracle.hpp"

namespace cvr {

namespace {

constexpr double kSumTol = 1e-9;
constexpr double kFixedPointTol = 1e-10;
constexpr int kFixedPointMaxIter = 50;

double phase_angle(Phase p) {
  switch (p) {
  case Phase::a: return 0.0;
  case Phase::b: return -2.0 * std::numbers::pi / 3.0;
  case Phase::c: return 2.0 * std::numbers::pi / 3.0;
  }
  return 0.0;
}

double squared_ratio(const FeederModel& model, const ControlSetpoints& controls, std::size_t line, Phase p) {
  if (auto r = model.regulator_on(line); r && model.regulators[*r].phases.has(p)) {
    const double b = controls.ratio(*r, p);
    return b * b;
  }
  return 1.0;
}

// Net demand at one bus given its squared voltages: loads minus PV minus capacitor support.
void bus_demand(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls, std::size_t bus,
                const PerPhase<double>& v, PerPhase<double>& p_out, PerPhase<double>& q_out,
                LinearPfSolution* record) {
  p_out = {0.0, 0.0, 0.0};
  q_out = {0.0, 0.0, 0.0};
  for (std::size_t l : model.loads_at(bus)) {
    const ZipLoad& load = model.loads[l];
    const PowerPair s = cvr_load_eval(CvrLoadModel::from_zip(load, op.load_scale), v[index(load.phase)]);
    p_out[index(load.phase)] += s.p;
    q_out[index(load.phase)] += s.q;
    if (record) record->load[l] = s;
  }
  for (std::size_t c : model.capacitors_at(bus)) {
    const CapacitorBank& cap = model.capacitors[c];
    for (Phase p : kAllPhases) {
      const double q = cap.phases.has(p) && controls.cap_on[c][index(p)] ? cap.q_rated * v[index(p)] : 0.0;
      q_out[index(p)] -= q;
      if (record) record->cap_q[c][index(p)] = q;
    }
  }
  for (std::size_t u : model.pvs_at(bus)) {
    const PvUnit& pv = model.pvs[u];
    for (Phase p : kAllPhases) {
      if (!pv.phases.has(p)) continue;
      p_out[index(p)] -= op.pv(u, p);
      q_out[index(p)] -= controls.pv_q[u][index(p)];
    }
  }
}

void accumulate_flows(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                      LinearPfSolution& sol, bool record) {
  const auto& order = model.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t bus = *it;
    PerPhase<double> p, q;
    bus_demand(model, op, controls, bus, sol.v[bus], p, q, record ? &sol : nullptr);
    if (!model.has_parent(bus)) continue;
    for (std::size_t child : model.child_lines(bus))
      for (Phase ph : kAllPhases) {
        p[index(ph)] += sol.P[child][index(ph)];
        q[index(ph)] += sol.Q[child][index(ph)];
      }
    const std::size_t l = model.parent_line(bus);
    for (Phase ph : kAllPhases) {
      const bool on = model.lines[l].phases.has(ph);
      sol.P[l][index(ph)] = on ? p[index(ph)] : 0.0;
      sol.Q[l][index(ph)] = on ? q[index(ph)] : 0.0;
    }
  }
}

double propagate_voltages(const FeederModel& model, const ControlSetpoints& controls,
                          const std::vector<LineCoefficients>& coeff, LinearPfSolution& sol) {
  double change = 0.0;
  for (std::size_t bus : model.topological_order()) {
    if (!model.has_parent(bus)) continue;
    const std::size_t l = model.parent_line(bus);
    const Line& line = model.lines[l];
    for (Phase p : kAllPhases) {
      if (!line.phases.has(p)) continue;
      double v = squared_ratio(model, controls, l, p) * sol.v[line.from][index(p)];
      for (Phase q : kAllPhases)
        v -= coeff[l].HP(index(p), index(q)) * sol.P[l][index(q)] + coeff[l].HQ(index(p), index(q)) * sol.Q[l][index(q)];
      change = std::max(change, std::abs(v - sol.v[bus][index(p)]));
      sol.v[bus][index(p)] = v;
    }
  }
  return change;
}

} // namespace

CvrFactors cvr_from_zip(const std::array<double, 3>& kp, const std::array<double, 3>& kq) {
  if (std::abs(kp[0] + kp[1] + kp[2] - 1.0) > kSumTol) throw InputError("ZIP active coefficients do not sum to 1");
  if (std::abs(kq[0] + kq[1] + kq[2] - 1.0) > kSumTol) throw InputError("ZIP reactive coefficients do not sum to 1");
  return {2.0 * kp[0] + kp[1], 2.0 * kq[0] + kq[1]};
}

CvrLoadModel CvrLoadModel::from_zip(const ZipLoad& load, double scale) {
  const CvrFactors f = cvr_from_zip(load.kp, load.kq);
  return {load.p0 * scale, load.q0 * scale, f.p, f.q};
}

PowerPair cvr_load_eval(const CvrLoadModel& m, double v) {
  return {m.p0 * (1.0 + 0.5 * m.cvr_p * (v - 1.0)), m.q0 * (1.0 + 0.5 * m.cvr_q * (v - 1.0))};
}

PowerPair zip_power(const ZipLoad& load, double v, double scale) {
  const double v2 = v * v;
  return {scale * load.p0 * (load.kp[0] * v2 + load.kp[1] * v + load.kp[2]),
          scale * load.q0 * (load.kq[0] * v2 + load.kq[1] * v + load.kq[2])};
}

LineCoefficients line_coefficients(const Line& line) {
  LineCoefficients c;
  for (Phase p : kAllPhases) {
    if (!line.phases.has(p)) continue;
    for (Phase q : kAllPhases) {
      if (!line.phases.has(q)) continue;
      const double alpha = phase_angle(p) - phase_angle(q);
      const double r = line.z(index(p), index(q)).real();
      const double x = line.z(index(p), index(q)).imag();
      const double ca = p == q ? 1.0 : std::cos(alpha);
      const double sa = p == q ? 0.0 : std::sin(alpha);
      c.HP(index(p), index(q)) = 2.0 * (r * ca + x * sa);
      c.HQ(index(p), index(q)) = 2.0 * (x * ca - r * sa);
    }
  }
  return c;
}

double LinearPfSolution::magnitude(std::size_t bus, Phase p) const { return std::sqrt(std::max(0.0, v[bus][index(p)])); }

LinearPfSolution solve_linear_pf(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls) {
  controls.check(model);
  std::vector<LineCoefficients> coeff;
  coeff.reserve(model.lines.size());
  for (const Line& line : model.lines) coeff.push_back(line_coefficients(line));

  LinearPfSolution sol;
  sol.v.assign(model.buses.size(), PerPhase<double>{});
  sol.P.assign(model.lines.size(), PerPhase<double>{});
  sol.Q.assign(model.lines.size(), PerPhase<double>{});
  sol.load.assign(model.loads.size(), PowerPair{});
  sol.cap_q.assign(model.capacitors.size(), PerPhase<double>{});
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (model.buses[b].phases.has(p)) sol.v[b][index(p)] = 1.0;

  bool converged = false;
  for (int it = 1; it <= kFixedPointMaxIter; ++it) {
    accumulate_flows(model, op, controls, sol, false);
    const double change = propagate_voltages(model, controls, coeff, sol);
    sol.iterations = it;
    if (change < kFixedPointTol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw SolveError("linear power flow did not converge in " + std::to_string(kFixedPointMaxIter) + " iterations");
  accumulate_flows(model, op, controls, sol, true);
  return sol;
}

LinearResiduals linear_residuals(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                                 const LinearPfSolution& sol) {
  LinearResiduals res;
  for (std::size_t bus = 0; bus < model.buses.size(); ++bus) {
    if (!model.has_parent(bus)) continue;
    PerPhase<double> p, q;
    bus_demand(model, op, controls, bus, sol.v[bus], p, q, nullptr);
    for (std::size_t child : model.child_lines(bus))
      for (Phase ph : kAllPhases) {
        p[index(ph)] += sol.P[child][index(ph)];
        q[index(ph)] += sol.Q[child][index(ph)];
      }
    const std::size_t l = model.parent_line(bus);
    const Line& line = model.lines[l];
    const LineCoefficients c = line_coefficients(line);
    for (Phase ph : kAllPhases) {
      if (!line.phases.has(ph)) continue;
      res.balance = std::max({res.balance, std::abs(sol.P[l][index(ph)] - p[index(ph)]),
                              std::abs(sol.Q[l][index(ph)] - q[index(ph)])});
      double drop = 0.0;
      for (Phase k : kAllPhases) drop += c.HP(index(ph), index(k)) * sol.P[l][index(k)] + c.HQ(index(ph), index(k)) * sol.Q[l][index(k)];
      const double expected = squared_ratio(model, controls, l, ph) * sol.v[line.from][index(ph)] - drop;
      res.voltage = std::max(res.voltage, std::abs(sol.v[bus][index(ph)] - expected));
    }
  }
  return res;
}

OracleComparison compare_with_oracle(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls) {
  const LinearPfSolution lin = solve_linear_pf(model, op, controls);
  const ComplexState exact = sweep_solve(model, op, controls);
  OracleComparison out;
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (model.buses[b].phases.has(p))
        out.max_dv = std::max(out.max_dv, std::abs(lin.magnitude(b, p) - exact.magnitude(b, p)));
  for (std::size_t l = 0; l < model.lines.size(); ++l)
    for (Phase p : kAllPhases) {
      if (!model.lines[l].phases.has(p)) continue;
      const Complex s_exact = exact.S[l][index(p)];
      if (std::abs(s_exact) < 1e-6) continue;
      const Complex s_lin(lin.P[l][index(p)], lin.Q[l][index(p)]);
      out.max_ds_pct = std::max(out.max_ds_pct, 100.0 * std::abs(s_lin - s_exact) / std::abs(s_exact));
    }
  return out;
}

} // namespace cvr
