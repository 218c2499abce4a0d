#include "cvr/milp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "cvr/linear_pf.hpp"

namespace cvr {

int MilpProblem::add_variable(const std::string& name, double lo, double hi, double cost, bool binary) {
  if (names.count(name)) throw std::logic_error("duplicate MILP column " + name);
  const int j = lp.add_variable(lo, hi, cost);
  names.emplace(name, j);
  col_names.push_back(name);
  if (binary) binaries.push_back(j);
  return j;
}

int MilpProblem::add_row(const std::string& name, std::vector<std::pair<int, double>> coef, RowSense sense, double rhs) {
  row_names.push_back(name);
  return lp.add_row(std::move(coef), sense, rhs);
}

int MilpProblem::column(std::string_view name) const {
  auto it = names.find(name);
  if (it == names.end()) throw InputError("unknown MILP column '" + std::string(name) + "'");
  return it->second;
}

bool MilpProblem::is_binary(int col) const { return std::find(binaries.begin(), binaries.end(), col) != binaries.end(); }

std::size_t MilpProblem::count_rows(std::string_view prefix) const {
  return static_cast<std::size_t>(
      std::count_if(row_names.begin(), row_names.end(), [&](const std::string& n) { return n.starts_with(prefix); }));
}

std::string to_string(MilpStatus s) {
  switch (s) {
  case MilpStatus::optimal: return "optimal";
  case MilpStatus::infeasible: return "infeasible";
  case MilpStatus::time_limit: return "time-limit";
  case MilpStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// branch and bound

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Node {
  double bound;
  long seq;
  std::vector<std::pair<int, int>> fixed; // (column, value)
  std::vector<double> x;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.seq > b.seq;
  }
};

} // namespace

MilpSolution branch_and_bound(const MilpProblem& problem, const BranchOptions& options) {
  const auto t0 = Clock::now();
  problem.lp.validate();
  MilpSolution best;
  best.objective = kInf;

  std::vector<int> bins = problem.binaries;
  std::sort(bins.begin(), bins.end());

  auto evaluate = [&](const std::vector<std::pair<int, int>>& fixed, LpSolution& out) {
    std::vector<double> lo = problem.lp.lower, up = problem.lp.upper;
    for (auto [j, val] : fixed) lo[j] = up[j] = val;
    out = solve_lp(problem.lp, lo, up);
    return out.status;
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long seq = 0;
  bool limit_hit = false;
  {
    LpSolution root;
    const LpStatus s = evaluate({}, root);
    if (s == LpStatus::iteration_limit) limit_hit = true;
    if (s == LpStatus::unbounded) throw SolveError("MILP relaxation is unbounded");
    if (s == LpStatus::optimal) open.push({root.objective, seq++, {}, std::move(root.x)});
  }

  while (!open.empty()) {
    if (seconds_since(t0) > options.time_limit) {
      best.status = MilpStatus::time_limit;
      best.elapsed = seconds_since(t0);
      return best;
    }
    Node node = open.top();
    open.pop();
    if (best.has_incumbent && node.bound >= best.objective - options.abs_gap) break;

    int branch = -1;
    double frac = options.integrality_tol;
    for (int j : bins) {
      const double f = std::min(node.x[j], 1.0 - node.x[j]);
      if (f > frac + 1e-15) {
        frac = f;
        branch = j;
      }
    }
    if (branch < 0) {
      if (!best.has_incumbent || node.bound < best.objective) {
        best.has_incumbent = true;
        best.objective = node.bound;
        best.x = std::move(node.x);
        for (int j : bins) best.x[j] = std::round(best.x[j]);
      }
      continue;
    }

    ++best.branches;
    for (int val : {0, 1}) {
      auto fixed = node.fixed;
      fixed.push_back({branch, val});
      LpSolution child;
      const LpStatus s = evaluate(fixed, child);
      if (s == LpStatus::iteration_limit) limit_hit = true;
      if (s != LpStatus::optimal) continue;
      if (best.has_incumbent && child.objective >= best.objective - options.abs_gap) continue;
      open.push({child.objective, seq++, std::move(fixed), std::move(child.x)});
    }
  }
  best.elapsed = seconds_since(t0);
  if (best.has_incumbent)
    best.status = MilpStatus::optimal;
  else
    best.status = limit_hit ? MilpStatus::iteration_limit : MilpStatus::infeasible;
  return best;
}

// ---------------------------------------------------------------------------
// enumeration oracle

double DiscreteStructure::combinations() const {
  double n = std::pow(2.0, static_cast<double>(free_binaries.size()));
  for (const auto& g : sos1) n *= static_cast<double>(g.size());
  return n;
}

DiscreteStructure discrete_structure(const MilpProblem& problem) {
  DiscreteStructure d;
  std::vector<char> grouped(problem.lp.num_cols(), 0);
  for (const LpRow& row : problem.lp.rows) {
    if (row.sense != RowSense::eq || row.rhs != 1.0 || row.coef.empty()) continue;
    const bool sos = std::all_of(row.coef.begin(), row.coef.end(), [&](auto e) {
      return e.second == 1.0 && problem.is_binary(e.first) && !grouped[e.first];
    });
    if (!sos) continue;
    std::vector<int> g;
    for (auto [j, a] : row.coef) {
      g.push_back(j);
      grouped[j] = 1;
    }
    std::sort(g.begin(), g.end());
    d.sos1.push_back(std::move(g));
  }
  for (int j : problem.binaries)
    if (!grouped[j]) d.free_binaries.push_back(j);
  std::sort(d.free_binaries.begin(), d.free_binaries.end());
  return d;
}

MilpSolution enumerate_oracle(const MilpProblem& problem, double max_combinations) {
  const auto t0 = Clock::now();
  problem.lp.validate();
  const DiscreteStructure d = discrete_structure(problem);
  const double total = d.combinations();
  if (total > max_combinations)
    throw InputError("enumeration needs " + std::to_string(static_cast<long long>(total)) + " combinations (limit " +
                     std::to_string(static_cast<long long>(max_combinations)) + ")");

  MilpSolution best;
  best.objective = kInf;
  std::vector<std::size_t> digit(d.sos1.size() + d.free_binaries.size(), 0);
  std::vector<std::size_t> radix;
  for (const auto& g : d.sos1) radix.push_back(g.size());
  for (std::size_t i = 0; i < d.free_binaries.size(); ++i) radix.push_back(2);

  while (true) {
    std::vector<double> lo = problem.lp.lower, up = problem.lp.upper;
    for (std::size_t g = 0; g < d.sos1.size(); ++g)
      for (std::size_t k = 0; k < d.sos1[g].size(); ++k) lo[d.sos1[g][k]] = up[d.sos1[g][k]] = k == digit[g] ? 1.0 : 0.0;
    for (std::size_t i = 0; i < d.free_binaries.size(); ++i)
      lo[d.free_binaries[i]] = up[d.free_binaries[i]] = static_cast<double>(digit[d.sos1.size() + i]);
    const LpSolution s = solve_lp(problem.lp, lo, up);
    ++best.branches;
    if (s.status == LpStatus::optimal && s.objective < best.objective) {
      best.objective = s.objective;
      best.x = s.x;
      best.has_incumbent = true;
    }
    std::size_t pos = 0;
    while (pos < digit.size() && ++digit[pos] == radix[pos]) digit[pos++] = 0;
    if (pos == digit.size()) break;
  }
  best.status = best.has_incumbent ? MilpStatus::optimal : MilpStatus::infeasible;
  best.elapsed = seconds_since(t0);
  return best;
}

// ---------------------------------------------------------------------------
// MPS

namespace {

std::string mps_number(double v) {
  char buf[32];
  for (int prec = 12; prec >= 1; --prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::char_traits<char>::length(buf) <= 12) return buf;
  }
  return buf;
}

std::string fit(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string seq_name(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%07d", prefix, i + 1);
  return buf;
}

// Fields start at columns 2, 5, 15, 25, 40, 50.
std::string mps_line(const std::string& f1, const std::string& f2, const std::string& f3, const std::string& f4,
                     const std::string& f5 = "", const std::string& f6 = "") {
  std::string line = " " + fit(f1, 2) + " " + fit(f2, 8) + "  " + fit(f3, 8) + "  " + fit(f4, 12);
  if (!f5.empty()) line += "   " + fit(f5, 8) + "  " + f6;
  while (!line.empty() && line.back() == ' ') line.pop_back();
  return line;
}

} // namespace

void write_mps(const MilpProblem& problem, std::ostream& out) {
  const LpProblem& lp = problem.lp;
  std::vector<std::vector<std::pair<int, double>>> cols(lp.num_cols());
  for (int i = 0; i < lp.num_rows(); ++i)
    for (auto [j, a] : lp.rows[i].coef) cols[j].push_back({i, a});

  out << "NAME          CVRMILP\nROWS\n";
  out << mps_line("N", "COST", "", "") << '\n';
  for (int i = 0; i < lp.num_rows(); ++i) {
    const char* t = lp.rows[i].sense == RowSense::le ? "L" : lp.rows[i].sense == RowSense::ge ? "G" : "E";
    out << mps_line(t, seq_name('R', i), "", "") << '\n';
  }
  out << "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (int j = 0; j < lp.num_cols(); ++j) {
    const bool b = problem.is_binary(j);
    if (b != in_int) {
      char name[16];
      std::snprintf(name, sizeof name, "MARKER%02d", marker++ % 100);
      out << "    " << fit(name, 8) << "                 'MARKER'                 " << (b ? "'INTORG'" : "'INTEND'") << '\n';
      in_int = b;
    }
    std::vector<std::pair<std::string, double>> entries;
    if (lp.cost[j] != 0.0) entries.push_back({"COST", lp.cost[j]});
    for (auto [i, a] : cols[j]) entries.push_back({seq_name('R', i), a});
    if (entries.empty()) entries.push_back({"COST", 0.0});
    for (std::size_t k = 0; k < entries.size(); k += 2) {
      if (k + 1 < entries.size())
        out << mps_line("", seq_name('C', j), entries[k].first, mps_number(entries[k].second), entries[k + 1].first,
                        mps_number(entries[k + 1].second))
            << '\n';
      else
        out << mps_line("", seq_name('C', j), entries[k].first, mps_number(entries[k].second)) << '\n';
    }
  }
  if (in_int) {
    char name[16];
    std::snprintf(name, sizeof name, "MARKER%02d", marker % 100);
    out << "    " << fit(name, 8) << "                 'MARKER'                 'INTEND'\n";
  }
  out << "RHS\n";
  for (int i = 0; i < lp.num_rows(); ++i)
    if (lp.rows[i].rhs != 0.0) out << mps_line("", "RHS", seq_name('R', i), mps_number(lp.rows[i].rhs)) << '\n';
  out << "BOUNDS\n";
  for (int j = 0; j < lp.num_cols(); ++j) {
    const std::string c = seq_name('C', j);
    if (lp.lower[j] == lp.upper[j]) {
      out << mps_line("FX", "BND", c, mps_number(lp.lower[j])) << '\n';
      continue;
    }
    if (lp.lower[j] != 0.0) out << mps_line("LO", "BND", c, mps_number(lp.lower[j])) << '\n';
    out << mps_line("UP", "BND", c, mps_number(lp.upper[j])) << '\n';
  }
  out << "ENDATA\n";
}

// ---------------------------------------------------------------------------
// CVR formulation

double hexagon_radius(double s_max) {
  const double t = 2.0 * std::numbers::pi / 6.0;
  return s_max * std::sqrt(t / std::sin(t));
}

namespace {

std::string tag(Phase p) { return std::string(1, to_char(p)); }

void add_mccormick(MilpProblem& mp, const std::string& name, int w, int u, int v, double lo, double hi) {
  mp.add_row(name + ":1", {{w, 1.0}, {u, -hi}}, RowSense::le, 0.0);
  mp.add_row(name + ":2", {{w, 1.0}, {u, -lo}}, RowSense::ge, 0.0);
  mp.add_row(name + ":3", {{w, 1.0}, {v, -1.0}, {u, -lo}}, RowSense::le, -lo);
  mp.add_row(name + ":4", {{w, 1.0}, {v, -1.0}, {u, -hi}}, RowSense::ge, -hi);
}

} // namespace

CvrMilp build_cvr_milp(const FeederModel& model, const std::vector<PerPhase<double>>& forecast,
                       [[maybe_unused]] const ControlSetpoints* prev, const MilpOptions& options) {
  if (forecast.size() != model.pvs.size()) throw InputError("forecast does not match the PV unit count");
  for (std::size_t u = 0; u < model.pvs.size(); ++u)
    for (Phase p : kAllPhases) {
      const double f = forecast[u][index(p)];
      if (!model.pvs[u].phases.has(p)) continue;
      if (f < -1e-12 || f > model.pvs[u].p_max + 1e-9)
        throw InputError("forecast for pv '" + model.pvs[u].id + "' is outside [0, p_max]");
    }

  CvrMilp m;
  MilpProblem& mp = m.problem;
  const std::size_t nb = model.buses.size(), nl = model.lines.size();
  const PerPhase<int> none{-1, -1, -1};
  m.v.assign(nb, none);
  m.P.assign(nl, none);
  m.Q.assign(nl, none);
  m.qdg.assign(model.pvs.size(), none);
  m.tap.assign(model.regulators.size(), {});
  m.cap.assign(model.capacitors.size(), none);
  m.cap_w.assign(model.capacitors.size(), none);

  std::vector<PerPhase<double>> vlo(nb), vhi(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const Bus& bus = model.buses[b];
    for (Phase p : kAllPhases) {
      if (!bus.phases.has(p)) continue;
      double lo = std::pow(bus.vmin + options.vmin_margin, 2), hi = std::pow(bus.vmax - options.vmin_margin, 2);
      if (bus.is_substation) lo = hi = 1.0;
      vlo[b][index(p)] = lo;
      vhi[b][index(p)] = hi;
      m.v[b][index(p)] = mp.add_variable("v:" + bus.id + ":" + tag(p), std::min(lo, hi), std::max(lo, hi));
    }
  }
  const std::size_t sub = model.substation();
  for (std::size_t l = 0; l < nl; ++l) {
    const Line& line = model.lines[l];
    const double bound = 2.0 * hexagon_radius(line.s_max);
    const bool root = line.from == sub;
    for (Phase p : kAllPhases) {
      if (!line.phases.has(p)) continue;
      m.P[l][index(p)] = mp.add_variable("P:" + line.id + ":" + tag(p), -bound, bound, root ? 1.0 : 0.0);
      m.Q[l][index(p)] = mp.add_variable("Q:" + line.id + ":" + tag(p), -bound, bound);
    }
  }
  for (std::size_t u = 0; u < model.pvs.size(); ++u) {
    const PvUnit& pv = model.pvs[u];
    for (Phase p : kAllPhases) {
      if (!pv.phases.has(p)) continue;
      const double qcap = (1.0 - options.q_reserve) * reactive_capability(pv.s_rated, forecast[u][index(p)]);
      m.qdg[u][index(p)] = mp.add_variable("qdg:" + pv.id + ":" + tag(p), -qcap, qcap);
    }
  }

  // regulator tap selection
  for (std::size_t r = 0; r < model.regulators.size(); ++r) {
    const Regulator& reg = model.regulators[r];
    std::vector<int> shared;
    auto make_group = [&](const std::string& suffix) {
      std::vector<int> cols;
      std::vector<std::pair<int, double>> sos;
      for (int k = 0; k < kTapPositions; ++k) {
        cols.push_back(mp.add_variable("u:" + reg.id + ":" + suffix + ":" + std::to_string(k), 0.0, 1.0, 0.0, true));
        sos.push_back({cols.back(), 1.0});
      }
      mp.add_row("sos:" + reg.id + ":" + suffix, std::move(sos), RowSense::eq, 1.0);
      return cols;
    };
    if (reg.gang_operated) shared = make_group("g");
    for (Phase p : kAllPhases)
      if (reg.phases.has(p)) m.tap[r][index(p)] = reg.gang_operated ? shared : make_group(tag(p));
  }

  // capacitor switches
  for (std::size_t c = 0; c < model.capacitors.size(); ++c) {
    const CapacitorBank& cap = model.capacitors[c];
    int shared = -1;
    if (cap.gang_operated) shared = mp.add_variable("uc:" + cap.id + ":g", 0.0, 1.0, 0.0, true);
    for (Phase p : kAllPhases) {
      if (!cap.phases.has(p)) continue;
      const int u = cap.gang_operated ? shared : mp.add_variable("uc:" + cap.id + ":" + tag(p), 0.0, 1.0, 0.0, true);
      m.cap[c][index(p)] = u;
      const double lo = vlo[cap.bus][index(p)], hi = vhi[cap.bus][index(p)];
      const int w = mp.add_variable("wc:" + cap.id + ":" + tag(p), 0.0, hi);
      m.cap_w[c][index(p)] = w;
      add_mccormick(mp, "mccap:" + cap.id + ":" + tag(p), w, u, m.v[cap.bus][index(p)], lo, hi);
    }
  }

  // nodal balance with loads linear in v
  for (std::size_t b = 0; b < nb; ++b) {
    if (!model.has_parent(b)) continue;
    const std::size_t l = model.parent_line(b);
    const Line& line = model.lines[l];
    for (Phase p : kAllPhases) {
      if (!line.phases.has(p)) continue;
      std::vector<std::pair<int, double>> rp{{m.P[l][index(p)], 1.0}}, rq{{m.Q[l][index(p)], 1.0}};
      double const_p = 0.0, const_q = 0.0, vp = 0.0, vq = 0.0;
      for (std::size_t child : model.child_lines(b))
        if (model.lines[child].phases.has(p)) {
          rp.push_back({m.P[child][index(p)], -1.0});
          rq.push_back({m.Q[child][index(p)], -1.0});
        }
      for (std::size_t ld : model.loads_at(b)) {
        const ZipLoad& load = model.loads[ld];
        if (load.phase != p) continue;
        const CvrLoadModel cm = CvrLoadModel::from_zip(load, options.load_scale);
        const_p += cm.p0 * (1.0 - 0.5 * cm.cvr_p);
        const_q += cm.q0 * (1.0 - 0.5 * cm.cvr_q);
        vp += 0.5 * cm.p0 * cm.cvr_p;
        vq += 0.5 * cm.q0 * cm.cvr_q;
      }
      for (std::size_t u : model.pvs_at(b)) {
        if (!model.pvs[u].phases.has(p)) continue;
        const_p -= forecast[u][index(p)];
        rq.push_back({m.qdg[u][index(p)], 1.0});
      }
      for (std::size_t c : model.capacitors_at(b))
        if (model.capacitors[c].phases.has(p)) rq.push_back({m.cap_w[c][index(p)], model.capacitors[c].q_rated});
      const int vcol = m.v[b][index(p)];
      if (vp != 0.0) rp.push_back({vcol, -vp});
      if (vq != 0.0) rq.push_back({vcol, -vq});
      mp.add_row("balp:" + model.buses[b].id + ":" + tag(p), std::move(rp), RowSense::eq, const_p);
      mp.add_row("balq:" + model.buses[b].id + ":" + tag(p), std::move(rq), RowSense::eq, const_q);
    }
  }

  // voltage drop, with tap products on regulated phases
  for (std::size_t l = 0; l < nl; ++l) {
    const Line& line = model.lines[l];
    const LineCoefficients h = line_coefficients(line);
    const auto reg = model.regulator_on(l);
    for (Phase p : kAllPhases) {
      if (!line.phases.has(p)) continue;
      std::vector<std::pair<int, double>> row{{m.v[line.to][index(p)], 1.0}};
      for (Phase q : kAllPhases) {
        if (!line.phases.has(q)) continue;
        if (double a = h.HP(index(p), index(q)); a != 0.0) row.push_back({m.P[l][index(q)], a});
        if (double a = h.HQ(index(p), index(q)); a != 0.0) row.push_back({m.Q[l][index(q)], a});
      }
      const int vfrom = m.v[line.from][index(p)];
      if (reg && model.regulators[*reg].phases.has(p)) {
        const Regulator& rg = model.regulators[*reg];
        const double lo = vlo[line.from][index(p)], hi = vhi[line.from][index(p)];
        for (int k = 0; k < kTapPositions; ++k) {
          const std::string name = rg.id + ":" + tag(p) + ":" + std::to_string(k);
          const int w = mp.add_variable("w:" + name, 0.0, hi);
          add_mccormick(mp, "mc:" + name, w, m.tap[*reg][index(p)][k], vfrom, lo, hi);
          const double b = tap_ratio(k);
          row.push_back({w, -b * b});
        }
        mp.add_row("vreg:" + line.id + ":" + tag(p), std::move(row), RowSense::eq, 0.0);
      } else {
        row.push_back({vfrom, -1.0});
        mp.add_row("vdrop:" + line.id + ":" + tag(p), std::move(row), RowSense::eq, 0.0);
      }
    }
  }

  if (options.branch_capacity)
    for (std::size_t l = 0; l < nl; ++l) add_branch_capacity(m, model, l);
  return m;
}

void add_branch_capacity(CvrMilp& milp, const FeederModel& model, std::size_t l) {
  const Line& line = model.lines[l];
  const double R = hexagon_radius(line.s_max);
  const double apothem = R * std::cos(std::numbers::pi / 6.0);
  for (Phase p : kAllPhases) {
    if (!line.phases.has(p)) continue;
    for (int k = 0; k < 6; ++k) {
      const double phi = std::numbers::pi / 6.0 + k * std::numbers::pi / 3.0;
      std::vector<std::pair<int, double>> row;
      const double c = std::cos(phi), s = std::sin(phi);
      if (std::abs(c) > 1e-15) row.push_back({milp.P[l][index(p)], c});
      if (std::abs(s) > 1e-15) row.push_back({milp.Q[l][index(p)], s});
      milp.problem.add_row("hex:" + line.id + ":" + tag(p) + ":" + std::to_string(k), std::move(row), RowSense::le,
                           apothem);
    }
  }
}

ControlSetpoints extract_setpoints(const FeederModel& model, const CvrMilp& milp, const MilpSolution& solution) {
  if (!solution.has_incumbent) throw SolveError("MILP has no feasible solution (" + to_string(solution.status) + ")");
  const auto& x = solution.x;
  for (int j : milp.problem.binaries)
    if (std::min(std::abs(x[j]), std::abs(1.0 - x[j])) > 1e-6)
      throw std::logic_error("fractional binary " + milp.problem.col_names[j] + " in MILP solution");

  ControlSetpoints c = ControlSetpoints::neutral(model);
  for (std::size_t r = 0; r < model.regulators.size(); ++r)
    for (Phase p : kAllPhases) {
      const auto& cols = milp.tap[r][index(p)];
      for (int k = 0; k < static_cast<int>(cols.size()); ++k)
        if (x[cols[k]] > 0.5) c.taps[r][index(p)] = k;
    }
  for (std::size_t k = 0; k < model.capacitors.size(); ++k)
    for (Phase p : kAllPhases)
      if (milp.cap[k][index(p)] >= 0) c.cap_on[k][index(p)] = x[milp.cap[k][index(p)]] > 0.5;
  for (std::size_t u = 0; u < model.pvs.size(); ++u)
    for (Phase p : kAllPhases)
      if (milp.qdg[u][index(p)] >= 0) c.pv_q[u][index(p)] = x[milp.qdg[u][index(p)]];
  c.v_ref.assign(model.buses.size(), PerPhase<double>{});
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (milp.v[b][index(p)] >= 0) c.v_ref[b][index(p)] = std::sqrt(std::max(0.0, x[milp.v[b][index(p)]]));
  return c;
}

} // namespace cvr
