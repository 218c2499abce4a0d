#include "cvr/oracle.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cvr/linear_pf.hpp"

namespace cvr {

Complex nominal_phasor(Phase p) {
  static const double third = 2.0 * std::numbers::pi / 3.0;
  switch (p) {
  case Phase::a: return {1.0, 0.0};
  case Phase::b: return std::polar(1.0, -third);
  case Phase::c: return std::polar(1.0, third);
  }
  return {1.0, 0.0};
}

Complex zip_current(const ZipLoad& load, Complex V, double scale) {
  const double mag = std::abs(V);
  if (!(mag > kCollapseGuard))
    throw SolveError("voltage collapse at load '" + load.id + "' (|V| = " + std::to_string(mag) + " pu)");
  const PowerPair s = zip_power(load, mag, scale);
  return std::conj(Complex(s.p, s.q) / V);
}

namespace {

double line_ratio(const FeederModel& model, const ControlSetpoints& controls, std::size_t line, Phase p) {
  if (auto r = model.regulator_on(line); r && model.regulators[*r].phases.has(p)) return controls.ratio(*r, p);
  return 1.0;
}

// Current drawn out of the network at `bus` by loads, capacitors and PV.
PerPhase<Complex> shunt_current(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                                std::size_t bus, const PerPhase<Complex>& V) {
  PerPhase<Complex> I{};
  for (std::size_t l : model.loads_at(bus)) {
    const ZipLoad& load = model.loads[l];
    I[index(load.phase)] += zip_current(load, V[index(load.phase)], op.load_scale);
  }
  for (std::size_t c : model.capacitors_at(bus)) {
    const CapacitorBank& cap = model.capacitors[c];
    for (Phase p : kAllPhases) {
      if (!cap.phases.has(p) || !controls.cap_on[c][index(p)]) continue;
      const Complex v = V[index(p)];
      const Complex s(0.0, -cap.q_rated * std::norm(v));
      I[index(p)] += std::conj(s / v);
    }
  }
  for (std::size_t u : model.pvs_at(bus)) {
    const PvUnit& pv = model.pvs[u];
    for (Phase p : kAllPhases) {
      if (!pv.phases.has(p)) continue;
      const Complex v = V[index(p)];
      if (!(std::abs(v) > kCollapseGuard)) throw SolveError("voltage collapse at pv '" + pv.id + "'");
      const Complex s(-op.pv(u, p), -controls.pv_q[u][index(p)]);
      I[index(p)] += std::conj(s / v);
    }
  }
  return I;
}

void backward_pass(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls, ComplexState& st) {
  const auto& order = model.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t bus = *it;
    if (!model.has_parent(bus)) continue;
    PerPhase<Complex> I = shunt_current(model, op, controls, bus, st.V[bus]);
    for (std::size_t child : model.child_lines(bus))
      for (Phase p : kAllPhases)
        if (model.lines[child].phases.has(p)) I[index(p)] += line_ratio(model, controls, child, p) * st.I[child][index(p)];
    const std::size_t l = model.parent_line(bus);
    for (Phase p : kAllPhases) st.I[l][index(p)] = model.lines[l].phases.has(p) ? I[index(p)] : Complex{};
  }
}

double forward_pass(const FeederModel& model, const ControlSetpoints& controls, ComplexState& st) {
  double change = 0.0;
  for (std::size_t bus : model.topological_order()) {
    if (!model.has_parent(bus)) continue;
    const std::size_t l = model.parent_line(bus);
    const Line& line = model.lines[l];
    for (Phase p : kAllPhases) {
      if (!line.phases.has(p)) continue;
      Complex v = line_ratio(model, controls, l, p) * st.V[line.from][index(p)];
      for (Phase q : kAllPhases)
        if (line.phases.has(q)) v -= line.z(index(p), index(q)) * st.I[l][index(q)];
      change = std::max(change, std::abs(v - st.V[bus][index(p)]));
      st.V[bus][index(p)] = v;
    }
  }
  return change;
}

void sending_power(const FeederModel& model, const ControlSetpoints& controls, ComplexState& st) {
  for (std::size_t l = 0; l < model.lines.size(); ++l) {
    const Line& line = model.lines[l];
    for (Phase p : kAllPhases) {
      st.S[l][index(p)] = line.phases.has(p)
                              ? line_ratio(model, controls, l, p) * st.V[line.from][index(p)] * std::conj(st.I[l][index(p)])
                              : Complex{};
    }
  }
}

} // namespace

ComplexState sweep_solve(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                         const SweepOptions& options) {
  controls.check(model);
  ComplexState st;
  st.V.assign(model.buses.size(), PerPhase<Complex>{});
  st.I.assign(model.lines.size(), PerPhase<Complex>{});
  st.S.assign(model.lines.size(), PerPhase<Complex>{});
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (model.buses[b].phases.has(p)) st.V[b][index(p)] = nominal_phasor(p);

  bool converged = false;
  for (int it = 1; it <= options.max_iterations; ++it) {
    backward_pass(model, op, controls, st);
    const double change = forward_pass(model, controls, st);
    st.iterations = it;
    if (change < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw SolveError("power-flow sweep did not converge in " + std::to_string(options.max_iterations) + " iterations");
  backward_pass(model, op, controls, st);
  sending_power(model, controls, st);
  return st;
}

double kirchhoff_residual(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                          const ComplexState& state) {
  double worst = 0.0;
  for (std::size_t bus = 0; bus < model.buses.size(); ++bus) {
    if (!model.has_parent(bus)) continue;
    PerPhase<Complex> out = shunt_current(model, op, controls, bus, state.V[bus]);
    for (std::size_t child : model.child_lines(bus))
      for (Phase p : kAllPhases)
        if (model.lines[child].phases.has(p)) out[index(p)] += line_ratio(model, controls, child, p) * state.I[child][index(p)];
    const std::size_t l = model.parent_line(bus);
    for (Phase p : kAllPhases)
      if (model.lines[l].phases.has(p)) worst = std::max(worst, std::abs(state.I[l][index(p)] - out[index(p)]));
  }
  return worst;
}

PowerAudit power_audit(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& controls,
                       const ComplexState& state) {
  PowerAudit a{};
  for (std::size_t l : model.child_lines(model.substation()))
    for (Phase p : kAllPhases) a.source += state.S[l][index(p)];
  for (std::size_t l = 0; l < model.lines.size(); ++l) {
    const Line& line = model.lines[l];
    for (Phase p : kAllPhases) {
      if (!line.phases.has(p)) continue;
      Complex drop{};
      for (Phase q : kAllPhases)
        if (line.phases.has(q)) drop += line.z(index(p), index(q)) * state.I[l][index(q)];
      a.losses += drop * std::conj(state.I[l][index(p)]);
    }
  }
  for (const ZipLoad& load : model.loads) {
    const PowerPair s = zip_power(load, std::abs(state.V[load.bus][index(load.phase)]), op.load_scale);
    a.load += Complex(s.p, s.q);
  }
  for (std::size_t c = 0; c < model.capacitors.size(); ++c) {
    const CapacitorBank& cap = model.capacitors[c];
    for (Phase p : kAllPhases)
      if (cap.phases.has(p) && controls.cap_on[c][index(p)])
        a.capacitors += Complex(0.0, cap.q_rated * std::norm(state.V[cap.bus][index(p)]));
  }
  for (std::size_t u = 0; u < model.pvs.size(); ++u)
    for (Phase p : kAllPhases)
      if (model.pvs[u].phases.has(p)) a.pv += Complex(op.pv(u, p), controls.pv_q[u][index(p)]);
  return a;
}

} // namespace cvr
