#include "doctest.h"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cvr/linear_pf.hpp"
#include "cvr/milp.hpp"
#include "cvr/oracle.hpp"
#include "support/models.hpp"

using namespace cvr;
using namespace cvr::testing;

namespace {

std::vector<PerPhase<double>> pv_fraction(const FeederModel& m, double f) {
  std::vector<PerPhase<double>> out(m.pvs.size(), PerPhase<double>{});
  for (std::size_t u = 0; u < m.pvs.size(); ++u)
    for (Phase p : kAllPhases)
      if (m.pvs[u].phases.has(p)) out[u][index(p)] = f * m.pvs[u].p_max;
  return out;
}

// Substation, regulated bus r, load bus t. The regulator sits on s->r.
FeederModel regulated(PhaseSet ph, bool with_load, double vmin = 0.95) {
  FeederModel m;
  m.buses = {make_bus("r", ph), make_bus("s", PhaseSet::all(), true), make_bus("t", ph)};
  for (Bus& b : m.buses) b.vmin = vmin;
  ZMatrix z = ZMatrix::Zero();
  for (Phase p : kAllPhases)
    if (ph.has(p)) z(index(p), index(p)) = Complex(0.01, 0.02);
  m.lines = {make_line("L1", 1, 0, ph, z * 0.1), make_line("L2", 0, 2, ph, z)};
  Regulator reg;
  reg.id = "R1";
  reg.line = 0;
  reg.phases = ph;
  reg.gang_operated = true;
  m.regulators = {reg};
  if (with_load) {
    int k = 0;
    for (Phase p : kAllPhases) {
      if (!ph.has(p)) continue;
      ZipLoad ld;
      ld.id = "D" + std::to_string(++k);
      ld.bus = 2;
      ld.phase = p;
      ld.p0 = 0.4;
      ld.q0 = 0.15;
      ld.kp = {0.4, 0.3, 0.3};
      ld.kq = {0.4, 0.3, 0.3};
      m.loads.push_back(ld);
    }
  }
  m.finalize();
  return m;
}

FeederModel two_bus_with_cap() {
  FeederModel m = two_bus(PhaseSet::all(), balanced_z({0.02, 0.06}, {0.005, 0.02}), 0.4, 0.25, {0.5, 0.2, 0.3},
                          {0.5, 0.2, 0.3});
  CapacitorBank cap;
  cap.id = "C1";
  cap.bus = 1;
  cap.phases = PhaseSet::all();
  cap.q_rated = 0.2;
  cap.gang_operated = true;
  m.capacitors = {cap};
  m.finalize();
  return m;
}

// Minimal reader for the whitespace-separated fields write_mps emits. Integrality is dropped.
LpProblem read_mps(const std::string& text) {
  LpProblem lp;
  std::map<std::string, int> row_of, col_of;
  std::vector<RowSense> senses;
  std::vector<std::map<int, double>> rows;
  std::istringstream in(text);
  std::string line, section;
  auto col = [&](const std::string& name) {
    auto [it, fresh] = col_of.try_emplace(name, lp.num_cols());
    if (fresh) lp.add_variable(0.0, kInf);
    return it->second;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] != ' ') {
      std::istringstream h(line);
      h >> section;
      continue;
    }
    std::istringstream f(line);
    std::vector<std::string> t;
    for (std::string s; f >> s;) t.push_back(s);
    if (section == "ROWS") {
      if (t[0] == "N") continue;
      row_of[t[1]] = static_cast<int>(senses.size());
      senses.push_back(t[0] == "L" ? RowSense::le : t[0] == "G" ? RowSense::ge : RowSense::eq);
      rows.emplace_back();
    } else if (section == "COLUMNS") {
      if (t.size() > 1 && t[1] == "'MARKER'") continue;
      const int j = col(t[0]);
      for (std::size_t k = 1; k + 1 < t.size(); k += 2) {
        const double v = std::stod(t[k + 1]);
        if (t[k] == "COST") lp.cost[j] = v;
        else rows[row_of.at(t[k])][j] = v;
      }
    } else if (section == "RHS") {
      lp.rows.resize(rows.size());
      lp.rows[row_of.at(t[1])].rhs = std::stod(t[2]);
    } else if (section == "BOUNDS") {
      const int j = col_of.at(t[2]);
      const double v = std::stod(t[3]);
      if (t[0] == "FX") lp.lower[j] = lp.upper[j] = v;
      else if (t[0] == "LO") lp.lower[j] = v;
      else if (t[0] == "UP") lp.upper[j] = v;
    }
  }
  lp.rows.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lp.rows[i].sense = senses[i];
    for (auto [j, v] : rows[i]) lp.rows[i].coef.push_back({j, v});
  }
  return lp;
}

} // namespace

TEST_CASE("hexagon radius") {
  CHECK(std::abs(hexagon_radius(1.0) - 1.09964) < 1e-5);
  CHECK(hexagon_radius(2.5) == doctest::Approx(2.5 * hexagon_radius(1.0)));
  // equal area with the circle
  const double R = hexagon_radius(1.0);
  CHECK(1.5 * std::sqrt(3.0) * R * R == doctest::Approx(std::numbers::pi));
}

TEST_CASE("hexagon rows") {
  FeederModel m = two_bus(PhaseSet::of(Phase::a), single_phase_z(Phase::a, {0.01, 0.02}), 0.1, 0.0);
  m.lines[0].s_max = 1.0;
  MilpOptions opt;
  opt.branch_capacity = false;
  CvrMilp milp = build_cvr_milp(m, {}, nullptr, opt);
  const int before = milp.problem.lp.num_rows();
  add_branch_capacity(milp, m, 0);
  REQUIRE(milp.problem.lp.num_rows() == before + 6);
  const int P = milp.P[0][0], Q = milp.Q[0][0];
  const double R = hexagon_radius(1.0);
  auto inside = [&](double p, double q) {
    for (int i = before; i < milp.problem.lp.num_rows(); ++i) {
      double act = 0.0;
      for (auto [j, a] : milp.problem.lp.rows[i].coef) act += a * (j == P ? p : j == Q ? q : 0.0);
      if (act > milp.problem.lp.rows[i].rhs + 1e-12) return false;
    }
    return true;
  };
  CHECK(inside(1.0, 0.0));
  CHECK(inside(-1.0, 0.0));
  // flat sides sit at the apothem, inside the unit circle
  CHECK_FALSE(inside(0.0, -1.0));
  CHECK_FALSE(inside(1.15 * R, 0.0));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (int k = 0; k < 2000; ++k) {
    const double p = u(rng), q = u(rng);
    if (inside(p, q)) CHECK(p * p + q * q <= R * R + 1e-12);
    if (p * p + q * q <= std::pow(R * std::cos(std::numbers::pi / 6.0), 2)) CHECK(inside(p, q));
  }
}

TEST_CASE("plain two-bus model is an LP") {
  FeederModel m = two_bus(PhaseSet::all(), balanced_z({0.01, 0.03}, {0.002, 0.01}), 0.3, 0.1);
  CvrMilp milp = build_cvr_milp(m, {});
  CHECK(milp.problem.binaries.empty());
  MilpSolution bb = branch_and_bound(milp.problem);
  LpSolution lp = solve_lp(milp.problem.lp);
  MilpSolution en = enumerate_oracle(milp.problem);
  REQUIRE(bb.status == MilpStatus::optimal);
  CHECK(bb.objective == doctest::Approx(lp.objective).epsilon(1e-12));
  CHECK(en.objective == doctest::Approx(lp.objective).epsilon(1e-12));
  CHECK(bb.branches == 0);
}

TEST_CASE("gang regulator count audit") {
  SUBCASE("single phase") {
    FeederModel m = regulated(PhaseSet::of(Phase::b), false);
    CvrMilp milp = build_cvr_milp(m, {});
    CHECK(milp.problem.binaries.size() == 33);
    CHECK(milp.problem.count_rows("sos:") == 1);
    CHECK(milp.problem.count_rows("mc:") == 4 * 33);
    CHECK(milp.problem.count_rows("vreg:") == 1);
  }
  SUBCASE("three phase, one shared binary set") {
    FeederModel m = regulated(PhaseSet::all(), false);
    CvrMilp milp = build_cvr_milp(m, {});
    CHECK(milp.problem.binaries.size() == 33);
    CHECK(milp.problem.count_rows("sos:") == 1);
    CHECK(milp.problem.count_rows("mc:") == 3 * 4 * 33);
    CHECK(milp.problem.count_rows("vreg:") == 3);
    CHECK(milp.tap[0][0] == milp.tap[0][2]);
  }
}

TEST_CASE("fixture discrete structure") {
  const FeederModel& m = fixture();
  CvrMilp milp = build_cvr_milp(m, pv_fraction(m, 0.0));
  CHECK(milp.problem.binaries.size() == 33 * m.regulators.size() + m.capacitors.size());
  DiscreteStructure d = discrete_structure(milp.problem);
  CHECK(d.sos1.size() == 1);
  CHECK(d.free_binaries.size() == 2);
  CHECK(d.combinations() == doctest::Approx(132.0));
  CHECK(milp.problem.count_rows("mccap:") == 4 * 4); // gang bank on abc + single-phase bank
  for (int j : milp.problem.binaries) {
    CHECK(milp.problem.lp.lower[j] == 0.0);
    CHECK(milp.problem.lp.upper[j] == 1.0);
  }
  CHECK_NOTHROW(milp.problem.lp.validate());
}

TEST_CASE("capacitor toggle matches enumeration") {
  FeederModel m = two_bus_with_cap();
  CvrMilp milp = build_cvr_milp(m, {});
  REQUIRE(milp.problem.binaries.size() == 1);
  double best = kInf;
  for (double u : {0.0, 1.0}) {
    std::vector<double> lo = milp.problem.lp.lower, hi = milp.problem.lp.upper;
    lo[milp.problem.binaries[0]] = hi[milp.problem.binaries[0]] = u;
    LpSolution s = solve_lp(milp.problem.lp, lo, hi);
    if (s.status == LpStatus::optimal) best = std::min(best, s.objective);
  }
  MilpSolution bb = branch_and_bound(milp.problem);
  REQUIRE(bb.status == MilpStatus::optimal);
  CHECK(bb.objective == doctest::Approx(best).epsilon(1e-9));
  CHECK(enumerate_oracle(milp.problem).objective == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("fixed binaries solve at the root") {
  FeederModel m = regulated(PhaseSet::all(), true);
  CvrMilp milp = build_cvr_milp(m, {});
  for (int j : milp.problem.binaries) milp.problem.lp.upper[j] = 0.0;
  milp.problem.lp.lower[milp.tap[0][0][20]] = milp.problem.lp.upper[milp.tap[0][0][20]] = 1.0;
  MilpSolution bb = branch_and_bound(milp.problem);
  REQUIRE(bb.status == MilpStatus::optimal);
  CHECK(bb.branches == 0);
}

TEST_CASE("enumeration guard") {
  MilpProblem p;
  for (int k = 0; k < 21; ++k) p.add_variable("b" + std::to_string(k), 0, 1, 1.0, true);
  CHECK_THROWS_AS(enumerate_oracle(p), InputError);
  CHECK(discrete_structure(p).combinations() == doctest::Approx(std::pow(2.0, 21)));
}

TEST_CASE("tap decoding") {
  SUBCASE("neutral position") {
    FeederModel m = regulated(PhaseSet::all(), false);
    CvrMilp milp = build_cvr_milp(m, {});
    const int u16 = milp.tap[0][0][kNeutralTap];
    milp.problem.lp.lower[u16] = 1.0;
    MilpSolution s = branch_and_bound(milp.problem);
    ControlSetpoints c = extract_setpoints(m, milp, s);
    for (Phase p : kAllPhases) CHECK(c.ratio(0, p) == doctest::Approx(1.0));
  }
  SUBCASE("bottom position") {
    FeederModel m = regulated(PhaseSet::all(), false, 0.85);
    CvrMilp milp = build_cvr_milp(m, {});
    milp.problem.lp.lower[milp.tap[0][0][0]] = 1.0;
    MilpSolution s = branch_and_bound(milp.problem);
    REQUIRE(s.status == MilpStatus::optimal);
    ControlSetpoints c = extract_setpoints(m, milp, s);
    const std::size_t r = m.bus_index("r"), sub = m.bus_index("s");
    for (Phase p : kAllPhases) {
      CHECK(c.taps[0][index(p)] == 0);
      CHECK(c.ratio(0, p) == doctest::Approx(0.9));
      CHECK(s.x[milp.v[r][index(p)]] == doctest::Approx(0.81 * s.x[milp.v[sub][index(p)]]));
    }
  }
  SUBCASE("no incumbent") {
    FeederModel m = regulated(PhaseSet::all(), false);
    CvrMilp milp = build_cvr_milp(m, {});
    CHECK_THROWS_AS(extract_setpoints(m, milp, MilpSolution{}), SolveError);
  }
}

TEST_CASE("MPS dump reproduces the relaxation") {
  FeederModel m = regulated(PhaseSet::all(), true);
  CvrMilp milp = build_cvr_milp(m, {});
  std::ostringstream out;
  write_mps(milp.problem, out);
  const std::string text = out.str();
  CHECK(text.rfind("NAME", 0) == 0);
  CHECK(text.find("'INTORG'") != std::string::npos);
  CHECK(text.find("ENDATA") != std::string::npos);
  LpProblem back = read_mps(text);
  REQUIRE(back.num_cols() == milp.problem.lp.num_cols());
  REQUIRE(back.num_rows() == milp.problem.lp.num_rows());
  LpSolution a = solve_lp(milp.problem.lp), b = solve_lp(back);
  REQUIRE(b.status == LpStatus::optimal);
  CHECK(b.objective == doctest::Approx(a.objective).epsilon(1e-9));
}

TEST_CASE("fixture MILP") {
  const FeederModel& m = fixture();
  for (double f : {0.0, 0.6}) {
    CAPTURE(f);
    auto forecast = pv_fraction(m, f);
    MilpOptions opt;
    opt.load_scale = 0.8;
    CvrMilp milp = build_cvr_milp(m, forecast, nullptr, opt);
    MilpSolution s = branch_and_bound(milp.problem);
    REQUIRE(s.status == MilpStatus::optimal);
    CHECK(milp.problem.lp.max_violation(s.x) <= 1e-7);
    for (int j : milp.problem.binaries) CHECK(std::min(s.x[j], 1.0 - s.x[j]) <= 1e-6);

    // McCormick products are exact at binary points
    for (std::size_t r = 0; r < m.regulators.size(); ++r)
      for (Phase p : kAllPhases)
        for (int k = 0; k < static_cast<int>(milp.tap[r][index(p)].size()); ++k) {
          const std::string name = "w:" + m.regulators[r].id + ":" + std::string(1, to_char(p)) + ":" + std::to_string(k);
          const int v = milp.v[m.lines[m.regulators[r].line].from][index(p)];
          CHECK(std::abs(s.x[milp.problem.column(name)] - s.x[milp.tap[r][index(p)][k]] * s.x[v]) <= 1e-7);
        }
    for (std::size_t c = 0; c < m.capacitors.size(); ++c)
      for (Phase p : kAllPhases)
        if (milp.cap_w[c][index(p)] >= 0)
          CHECK(std::abs(s.x[milp.cap_w[c][index(p)]] -
                         s.x[milp.cap[c][index(p)]] * s.x[milp.v[m.capacitors[c].bus][index(p)]]) <= 1e-7);

    ControlSetpoints sp = extract_setpoints(m, milp, s);
    CHECK_NOTHROW(sp.check(m));
    OperatingPoint op;
    op.load_scale = opt.load_scale;
    op.pv_p = forecast;
    ComplexState st = sweep_solve(m, op, sp);
    for (std::size_t b = 0; b < m.buses.size(); ++b)
      for (Phase p : kAllPhases) {
        if (!m.buses[b].phases.has(p)) continue;
        CHECK(sp.v_ref[b][index(p)] >= 0.95 - 1e-9);
        CHECK(sp.v_ref[b][index(p)] <= 1.05 + 1e-9);
        CHECK(std::abs(st.magnitude(b, p) - sp.v_ref[b][index(p)]) <= 0.015);
      }
    for (std::size_t u = 0; u < m.pvs.size(); ++u)
      for (Phase p : kAllPhases)
        CHECK(std::abs(sp.pv_q[u][index(p)]) <= reactive_capability(m.pvs[u].s_rated, forecast[u][index(p)]) + 1e-9);
  }
}

TEST_CASE("branch and bound equals enumeration on the fixture") {
  const FeederModel& m = fixture();
  MilpOptions opt;
  opt.load_scale = 0.6;
  CvrMilp milp = build_cvr_milp(m, pv_fraction(m, 0.3), nullptr, opt);
  MilpSolution bb = branch_and_bound(milp.problem);
  MilpSolution en = enumerate_oracle(milp.problem);
  REQUIRE(bb.status == MilpStatus::optimal);
  REQUIRE(en.status == MilpStatus::optimal);
  CHECK(std::abs(bb.objective - en.objective) <= 1e-6);
  CHECK(en.branches == 132);
}

TEST_CASE("optimized plan draws less than neutral controls") {
  const FeederModel& m = fixture();
  for (double scale : {0.3, 1.0}) {
    CAPTURE(scale);
    MilpOptions opt;
    opt.load_scale = scale;
    opt.vmin_margin = 0.005;
    opt.q_reserve = 0.3;
    CvrMilp milp = build_cvr_milp(m, pv_fraction(m, 0.0), nullptr, opt);
    ControlSetpoints sp = extract_setpoints(m, milp, branch_and_bound(milp.problem));
    OperatingPoint op;
    op.load_scale = scale;
    const double opt_p = power_audit(m, op, sp, sweep_solve(m, op, sp)).source.real();
    ControlSetpoints neutral = ControlSetpoints::neutral(m);
    const double base_p = power_audit(m, op, neutral, sweep_solve(m, op, neutral)).source.real();
    CHECK(opt_p <= base_p);
  }
}

TEST_CASE("forecast outside rating is rejected") {
  const FeederModel& m = fixture();
  CHECK_THROWS_AS(build_cvr_milp(m, pv_fraction(m, 1.2)), InputError);
}
