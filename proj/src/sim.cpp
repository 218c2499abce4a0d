#include "cvr/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "cvr/local_control.hpp"

namespace cvr {

std::string to_string(ControllerMode m) {
  switch (m) {
  case ControllerMode::none: return "none";
  case ControllerMode::impedance: return "impedance";
  case ControllerMode::measurement: return "measurement";
  }
  return "none";
}

std::string to_string(LegacyMode m) { return m == LegacyMode::centralized ? "centralized" : "autonomous"; }

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string fmt_num(double v, int prec = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v, int line) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(line, 1, "value of '" + key + "' is not a number: " + v);
  return out;
}

} // namespace

// ---------------------------------------------------------------------------
// configuration

ScenarioConfig ScenarioConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  ScenarioConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  bool profiles_set = false;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).lexically_normal().string();
  };
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw.substr(0, raw.find('#'));
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, 1, "expected key = value");
    const std::string key = trim(std::string_view(s).substr(0, eq));
    const std::string val = trim(std::string_view(s).substr(eq + 1));
    if (key == "name") c.name = val;
    else if (key == "feeder") c.feeder = resolve(val);
    else if (key == "profiles") {
      c.profiles = resolve(val);
      profiles_set = true;
    } else if (key == "start_minute") c.start_minute = to_double(key, val, line);
    else if (key == "horizon") c.horizon = to_double(key, val, line);
    else if (key == "central_period") c.central_period = to_double(key, val, line);
    else if (key == "local_period") c.local_period = to_double(key, val, line);
    else if (key == "variability") c.variability = to_double(key, val, line);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_double(key, val, line));
    else if (key == "controller") {
      if (val == "none") c.controller = ControllerMode::none;
      else if (val == "impedance") c.controller = ControllerMode::impedance;
      else if (val == "measurement") c.controller = ControllerMode::measurement;
      else throw ParseError(line, static_cast<int>(eq) + 2, "unknown controller '" + val + "'");
    } else if (key == "legacy") {
      if (val == "centralized") c.legacy = LegacyMode::centralized;
      else if (val == "autonomous") c.legacy = LegacyMode::autonomous;
      else throw ParseError(line, static_cast<int>(eq) + 2, "unknown legacy mode '" + val + "'");
    } else if (key == "load_scale") c.load_scale = to_double(key, val, line);
    else if (key == "load_profile") c.load_profile = val;
    else if (key == "forecast_fraction") c.forecast_fraction = to_double(key, val, line);
    else if (key == "realized_fraction") c.realized_fraction = to_double(key, val, line);
    else if (key == "vmin_margin") c.vmin_margin = to_double(key, val, line);
    else if (key == "q_reserve") c.q_reserve = to_double(key, val, line);
    else throw ParseError(line, 1, "unknown key '" + key + "'");
  }
  if (!profiles_set && !c.feeder.empty()) {
    std::filesystem::path f(c.feeder);
    c.profiles = (f.parent_path() / (f.stem().string() + ".profiles.csv")).string();
  }
  c.check();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  return parse(read_text_file(path), std::filesystem::path(path).parent_path());
}

std::string ScenarioConfig::serialize() const {
  std::ostringstream o;
  o << "name = " << name << "\nfeeder = " << feeder << "\nprofiles = " << profiles
    << "\nstart_minute = " << fmt_num(start_minute) << "\nhorizon = " << fmt_num(horizon)
    << "\ncentral_period = " << fmt_num(central_period) << "\nlocal_period = " << fmt_num(local_period)
    << "\nvariability = " << fmt_num(variability) << "\nseed = " << seed << "\ncontroller = " << to_string(controller)
    << "\nlegacy = " << to_string(legacy) << "\nload_scale = " << fmt_num(load_scale);
  if (!load_profile.empty()) o << "\nload_profile = " << load_profile;
  if (forecast_fraction >= 0.0) o << "\nforecast_fraction = " << fmt_num(forecast_fraction);
  if (realized_fraction >= 0.0) o << "\nrealized_fraction = " << fmt_num(realized_fraction);
  o << "\nvmin_margin = " << fmt_num(vmin_margin) << "\nq_reserve = " << fmt_num(q_reserve) << '\n';
  return o.str();
}

void ScenarioConfig::check() const {
  if (!(local_period > 0.0) || !(central_period > 0.0)) throw InputError("periods must be positive");
  const double ratio = central_period / local_period;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) throw InputError("local period must divide the central period");
  if (!(horizon > 0.0)) throw InputError("horizon must be positive");
  if (variability < 0.0 || variability > 100.0) throw InputError("variability must lie in [0, 100]");
  if (forecast_fraction > 1.0 || realized_fraction > 1.0) throw InputError("PV fractions must not exceed 1");
  if (q_reserve < 0.0 || q_reserve >= 1.0) throw InputError("q_reserve must lie in [0, 1)");
  if (vmin_margin < 0.0) throw InputError("vmin_margin must be nonnegative");
  if (!(load_scale >= 0.0)) throw InputError("load_scale must be nonnegative");
  if (legacy == LegacyMode::autonomous && controller != ControllerMode::none)
    throw InputError("autonomous legacy mode runs without local control");
}

// ---------------------------------------------------------------------------
// profiles

std::vector<double> clear_sky_profile(double p_max, double horizon, double sunrise, double sunset, double step) {
  if (!(sunrise < sunset)) throw InputError("sunrise must precede sunset");
  if (sunrise < 0.0 || sunset > horizon) throw InputError("daylight window must lie inside the horizon");
  if (!(step > 0.0)) throw InputError("profile step must be positive");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor(horizon / step + 1e-9)) + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * step;
    double p = 0.0;
    if (t > sunrise && t < sunset) {
      const double s = std::sin(std::numbers::pi * (t - sunrise) / (sunset - sunrise));
      p = p_max * s * s;
    }
    out.push_back(p);
  }
  return out;
}

std::vector<double> apply_variability(const std::vector<double>& series, double variability, std::uint64_t seed,
                                      double p_max) {
  if (variability < 0.0 || variability > 100.0) throw InputError("variability must lie in [0, 100]");
  std::vector<double> out = series;
  if (variability == 0.0) return out;
  const double bound = variability / 100.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, bound / 3.0);
  for (double& p : out) {
    double e;
    do e = noise(rng);
    while (std::abs(e) > bound);
    p = std::clamp(p * (1.0 + e), 0.0, p_max);
  }
  return out;
}

// ---------------------------------------------------------------------------
// autonomous legacy devices

LegacyState LegacyState::initial(const FeederModel& model) {
  LegacyState s;
  s.taps.assign(model.regulators.size(), {kNeutralTap, kNeutralTap, kNeutralTap});
  s.cap_on.assign(model.capacitors.size(), {false, false, false});
  s.reg_timer.assign(model.regulators.size(), {0, 0, 0});
  s.cap_timer.assign(model.capacitors.size(), {0, 0, 0});
  return s;
}

namespace {

// Advances a signed confirmation timer; returns +1/-1 when a condition has held for `delay` ticks.
int confirm(int& timer, bool low, bool high, int delay) {
  if (low) timer = timer > 0 ? timer + 1 : 1;
  else if (high) timer = timer < 0 ? timer - 1 : -1;
  else timer = 0;
  if (timer >= delay) {
    timer = 0;
    return 1;
  }
  if (timer <= -delay) {
    timer = 0;
    return -1;
  }
  return 0;
}

double mean_magnitude(const ComplexState& st, std::size_t bus, PhaseSet phases) {
  double s = 0.0;
  int n = 0;
  for (Phase p : kAllPhases)
    if (phases.has(p)) {
      s += st.magnitude(bus, p);
      ++n;
    }
  return n ? s / n : 0.0;
}

} // namespace

std::vector<SwitchEvent> autonomous_legacy_step(const FeederModel& model, LegacyState& state,
                                                const ComplexState& voltages, double minute,
                                                const LegacySettings& settings) {
  std::vector<SwitchEvent> events;
  for (std::size_t r = 0; r < model.regulators.size(); ++r) {
    const Regulator& reg = model.regulators[r];
    const std::size_t child = model.lines[reg.line].to;
    auto act = [&](Phase lead, double v, const std::string& label, PhaseSet apply) {
      const bool low = v < 1.0 - settings.regulator_band, high = v > 1.0 + settings.regulator_band;
      const int move = confirm(state.reg_timer[r][index(lead)], low, high, settings.delay_ticks);
      if (move == 0) return;
      const int old = state.taps[r][index(lead)];
      const int next = std::clamp(old + move, 0, kTapPositions - 1);
      if (next == old) return;
      for (Phase p : kAllPhases)
        if (apply.has(p)) state.taps[r][index(p)] = next;
      events.push_back({minute, reg.id, label, old, next});
    };
    if (reg.gang_operated) {
      Phase lead = Phase::a;
      for (Phase p : kAllPhases)
        if (reg.phases.has(p)) {
          lead = p;
          break;
        }
      act(lead, mean_magnitude(voltages, child, reg.phases), reg.phases.str(), reg.phases);
    } else {
      for (Phase p : kAllPhases)
        if (reg.phases.has(p)) act(p, voltages.magnitude(child, p), std::string(1, to_char(p)), PhaseSet::of(p));
    }
  }
  for (std::size_t c = 0; c < model.capacitors.size(); ++c) {
    const CapacitorBank& cap = model.capacitors[c];
    auto act = [&](Phase lead, double v, const std::string& label, PhaseSet apply) {
      const bool on = state.cap_on[c][index(lead)];
      const bool low = !on && v < settings.cap_on_below, high = on && v > settings.cap_off_above;
      const int move = confirm(state.cap_timer[c][index(lead)], low, high, settings.delay_ticks);
      if (move == 0) return;
      const bool next = move > 0;
      for (Phase p : kAllPhases)
        if (apply.has(p)) state.cap_on[c][index(p)] = next;
      events.push_back({minute, cap.id, label, on ? 1 : 0, next ? 1 : 0});
    };
    if (cap.gang_operated) {
      Phase lead = Phase::a;
      for (Phase p : kAllPhases)
        if (cap.phases.has(p)) {
          lead = p;
          break;
        }
      act(lead, mean_magnitude(voltages, cap.bus, cap.phases), cap.phases.str(), cap.phases);
    } else {
      for (Phase p : kAllPhases)
        if (cap.phases.has(p)) act(p, voltages.magnitude(cap.bus, p), std::string(1, to_char(p)), PhaseSet::of(p));
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// metrics

double savfi(const std::vector<double>& series) {
  if (series.size() < 2) throw InputError("SAVFI needs at least two samples");
  double s = 0.0;
  for (std::size_t t = 0; t + 1 < series.size(); ++t) s += std::abs(series[t + 1] - series[t]);
  return s / static_cast<double>(series.size() - 1);
}

ViolationCount count_violations(const FeederModel& model, const std::vector<TickRecord>& ticks) {
  ViolationCount vc;
  std::set<std::pair<std::size_t, int>> nodes;
  std::set<std::size_t> buses;
  for (const TickRecord& t : ticks) {
    long n = 0;
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
      const Bus& bus = model.buses[b];
      for (Phase p : kAllPhases) {
        if (!bus.phases.has(p)) continue;
        const double v = t.vmag[b][index(p)];
        if (v < bus.vmin - 1e-9 || v > bus.vmax + 1e-9) {
          ++n;
          nodes.insert({b, index(p)});
          buses.insert(b);
        }
      }
    }
    vc.per_tick.push_back(n);
    vc.node_phase_ticks += n;
  }
  vc.unique_node_phases = nodes.size();
  vc.unique_buses = buses.size();
  return vc;
}

std::vector<std::pair<std::size_t, Phase>> pv_node_phases(const FeederModel& model) {
  std::set<std::pair<std::size_t, int>> s;
  for (const PvUnit& pv : model.pvs)
    for (Phase p : kAllPhases)
      if (pv.phases.has(p)) s.insert({pv.bus, index(p)});
  std::vector<std::pair<std::size_t, Phase>> out;
  for (auto [b, p] : s) out.push_back({b, kAllPhases[p]});
  return out;
}

// ---------------------------------------------------------------------------
// simulation

namespace {

struct CachedPlan {
  ControlSetpoints setpoints;
  double objective;
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, CachedPlan>& plan_cache() {
  static std::map<std::string, CachedPlan> c;
  return c;
}

CachedPlan plan_interval(const FeederModel& model, std::uint64_t feeder_hash, const std::vector<PerPhase<double>>& forecast,
                         const MilpOptions& opts, int interval) {
  std::string key = std::to_string(feeder_hash) + "|" + fmt_num(opts.load_scale, 17) + "|" + fmt_num(opts.vmin_margin, 17) +
                    "|" + fmt_num(opts.q_reserve, 17);
  for (const auto& f : forecast)
    for (double v : f) key += "|" + fmt_num(v, 17);
  {
    std::lock_guard lock(plan_mutex());
    if (auto it = plan_cache().find(key); it != plan_cache().end()) return it->second;
  }
  const CvrMilp milp = build_cvr_milp(model, forecast, nullptr, opts);
  const MilpSolution sol = branch_and_bound(milp.problem);
  if (!sol.has_incumbent)
    throw SolveError("MILP " + to_string(sol.status) + " at interval " + std::to_string(interval));
  CachedPlan plan{extract_setpoints(model, milp, sol), sol.objective};
  std::lock_guard lock(plan_mutex());
  plan_cache().emplace(key, plan);
  return plan;
}

ComplexState solve_at(const FeederModel& model, const OperatingPoint& op, const ControlSetpoints& c, double minute) {
  try {
    return sweep_solve(model, op, c);
  } catch (const SolveError& e) {
    throw SolveError(std::string(e.what()) + " at minute " + fmt_num(minute));
  }
}

// Per-PV data the local controllers need.
struct UnitGeometry {
  std::optional<Complex> zth;
  Eigen::Matrix3d parent_A = Eigen::Matrix3d::Zero();
  std::vector<std::size_t> child_lines;
  std::vector<Eigen::Matrix3d> child_A;
  double share = 1.0; // fraction of child-flow terms assigned to this unit
};

std::vector<UnitGeometry> unit_geometry(const FeederModel& model, ControllerMode mode) {
  std::vector<UnitGeometry> g(model.pvs.size());
  for (std::size_t u = 0; u < model.pvs.size(); ++u) {
    const std::size_t bus = model.pvs[u].bus;
    g[u].zth = controller_impedance(model, bus);
    if (mode != ControllerMode::measurement || !model.has_parent(bus)) continue;
    g[u].parent_A = flow_matrix(model.lines[model.parent_line(bus)]);
    g[u].child_lines = model.child_lines(bus);
    for (std::size_t l : g[u].child_lines) g[u].child_A.push_back(flow_matrix(model.lines[l]));
    g[u].share = 1.0 / static_cast<double>(model.pvs_at(bus).size());
  }
  return g;
}

void record_setpoint_events(const FeederModel& model, const ControlSetpoints& prev, const ControlSetpoints& next,
                            double minute, std::vector<SwitchEvent>& events) {
  for (std::size_t r = 0; r < model.regulators.size(); ++r) {
    const Regulator& reg = model.regulators[r];
    for (Phase p : kAllPhases) {
      if (!reg.phases.has(p)) continue;
      const int a = prev.taps[r][index(p)], b = next.taps[r][index(p)];
      if (a != b) events.push_back({minute, reg.id, reg.gang_operated ? reg.phases.str() : std::string(1, to_char(p)), a, b});
      if (reg.gang_operated) break;
    }
  }
  for (std::size_t c = 0; c < model.capacitors.size(); ++c) {
    const CapacitorBank& cap = model.capacitors[c];
    for (Phase p : kAllPhases) {
      if (!cap.phases.has(p)) continue;
      const bool a = prev.cap_on[c][index(p)], b = next.cap_on[c][index(p)];
      if (a != b)
        events.push_back({minute, cap.id, cap.gang_operated ? cap.phases.str() : std::string(1, to_char(p)), a, b});
      if (cap.gang_operated) break;
    }
  }
}

} // namespace

ScenarioResult run_two_timescale(const ScenarioConfig& config, const FeederModel& model, const ProfileSet& profiles) {
  config.check();
  if (config.realized_fraction < 0.0 || config.forecast_fraction < 0.0) check_profile_refs(model, profiles);
  if (!config.load_profile.empty() && !profiles.contains(config.load_profile))
    throw InputError("load profile '" + config.load_profile + "' is missing from the profile set");

  ScenarioResult res;
  res.config = config;
  const std::size_t nu = model.pvs.size();
  const auto ticks_per_interval = static_cast<long>(std::llround(config.central_period / config.local_period));
  const auto n_ticks = static_cast<long>(std::ceil(config.horizon / config.local_period - 1e-9));
  const auto n_intervals = static_cast<long>(std::ceil(config.horizon / config.central_period - 1e-9));
  const std::uint64_t feeder_hash = fnv1a(serialize_feeder(model));

  auto shape = [&](std::size_t u, double minute) {
    return profiles.value(model.pvs[u].profile_ref, minute);
  };
  auto load_at = [&](double minute) {
    return config.load_scale * (config.load_profile.empty() ? 1.0 : profiles.value(config.load_profile, minute));
  };

  // realized PV multipliers relative to p_max, one series per unit
  std::vector<std::vector<double>> realized(nu);
  for (std::size_t u = 0; u < nu; ++u) {
    std::vector<double> base;
    for (long k = 0; k < n_ticks; ++k) {
      const double t = config.start_minute + static_cast<double>(k) * config.local_period;
      base.push_back(config.realized_fraction >= 0.0 ? config.realized_fraction : std::clamp(shape(u, t), 0.0, 1.0));
    }
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(u)};
    std::uint64_t unit_seed = 0;
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    unit_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    realized[u] = apply_variability(base, config.variability, unit_seed, 1.0);
  }
  auto pv_vector = [&](auto&& per_unit) {
    std::vector<PerPhase<double>> out(nu, PerPhase<double>{});
    for (std::size_t u = 0; u < nu; ++u)
      for (Phase p : kAllPhases)
        if (model.pvs[u].phases.has(p)) out[u][index(p)] = per_unit(u) * model.pvs[u].p_max;
    return out;
  };

  const std::vector<UnitGeometry> geom = unit_geometry(model, config.controller);
  LegacyState legacy = LegacyState::initial(model);
  ControlSetpoints applied = ControlSetpoints::neutral(model);

  for (long i = 0; i < n_intervals; ++i) {
    const double t0 = config.start_minute + static_cast<double>(i) * config.central_period;
    const double mid = t0 + 0.5 * config.central_period;
    const auto forecast = pv_vector([&](std::size_t u) {
      return config.forecast_fraction >= 0.0 ? config.forecast_fraction : std::clamp(shape(u, mid), 0.0, 1.0);
    });

    ControlSetpoints plan = ControlSetpoints::neutral(model);
    ComplexState reference;
    OperatingPoint forecast_op{load_at(mid), forecast};
    if (config.legacy == LegacyMode::centralized) {
      MilpOptions mo;
      mo.load_scale = forecast_op.load_scale;
      mo.vmin_margin = config.vmin_margin;
      mo.q_reserve = config.q_reserve;
      const CachedPlan cp = plan_interval(model, feeder_hash, forecast, mo, static_cast<int>(i));
      ++res.metrics.milp_solves;
      plan = cp.setpoints;
      record_setpoint_events(model, applied, plan, t0, res.events);
      applied = plan;
      res.intervals.push_back({static_cast<int>(i), t0, plan, cp.objective});
      if (config.controller == ControllerMode::measurement) reference = solve_at(model, forecast_op, plan, t0);
    }

    std::vector<PerPhase<double>> last_q = plan.pv_q;
    for (long k = i * ticks_per_interval; k < std::min(n_ticks, (i + 1) * ticks_per_interval); ++k) {
      const double minute = config.start_minute + static_cast<double>(k) * config.local_period;
      OperatingPoint op{load_at(minute), pv_vector([&](std::size_t u) { return realized[u][k]; })};

      ControlSetpoints controls = plan;
      if (config.legacy == LegacyMode::autonomous) {
        controls.taps = legacy.taps;
        controls.cap_on = legacy.cap_on;
      }

      if (config.controller != ControllerMode::none) {
        std::optional<ComplexState> measured;
        if (config.controller == ControllerMode::measurement) {
          ControlSetpoints before = controls;
          before.pv_q = last_q;
          measured = solve_at(model, op, before, minute);
        }
        for (std::size_t u = 0; u < nu; ++u) {
          const PvUnit& pv = model.pvs[u];
          InverterCapability cap;
          PerPhase<double> dp{};
          for (Phase p : kAllPhases)
            if (pv.phases.has(p)) {
              cap.s_rated[index(p)] = pv.s_rated;
              cap.p_now[index(p)] = op.pv(u, p);
              dp[index(p)] = op.pv(u, p) - forecast[u][index(p)];
            }
          const PerPhase<double>& q0 = plan.pv_q[u];
          if (config.controller == ControllerMode::impedance) {
            if (geom[u].zth) controls.pv_q[u] = impedance_step(*geom[u].zth, dp, q0, cap, pv.phases);
          } else {
            LocalMeasurement meas;
            meas.phases = pv.phases;
            meas.dp_local = dp;
            for (std::size_t l : geom[u].child_lines) {
              PerPhase<double> d{};
              for (Phase p : kAllPhases)
                if (model.lines[l].phases.has(p))
                  d[index(p)] = geom[u].share * (measured->S[l][index(p)].real() - reference.S[l][index(p)].real());
              meas.child_dP.push_back(d);
            }
            controls.pv_q[u] = measurement_step(geom[u].parent_A, geom[u].child_A, meas, q0, cap);
          }
        }
      }

      const ComplexState st = solve_at(model, op, controls, minute);
      last_q = controls.pv_q;
      TickRecord rec;
      rec.minute = minute;
      rec.vmag.assign(model.buses.size(), PerPhase<double>{});
      for (std::size_t b = 0; b < model.buses.size(); ++b)
        for (Phase p : kAllPhases)
          if (model.buses[b].phases.has(p)) rec.vmag[b][index(p)] = st.magnitude(b, p);
      rec.pv_p = op.pv_p;
      rec.pv_q = controls.pv_q;
      rec.audit = power_audit(model, op, controls, st);
      res.ticks.push_back(std::move(rec));

      if (config.legacy == LegacyMode::autonomous) {
        auto ev = autonomous_legacy_step(model, legacy, st, minute);
        res.events.insert(res.events.end(), ev.begin(), ev.end());
      }
    }
  }

  // metrics
  ScenarioMetrics& m = res.metrics;
  m.savfi.assign(model.buses.size(), PerPhase<double>{});
  if (res.ticks.size() >= 2)
    for (std::size_t b = 0; b < model.buses.size(); ++b)
      for (Phase p : kAllPhases) {
        if (!model.buses[b].phases.has(p)) continue;
        std::vector<double> series;
        for (const TickRecord& t : res.ticks) series.push_back(t.vmag[b][index(p)]);
        m.savfi[b][index(p)] = 1e3 * savfi(series);
      }
  std::vector<double> pv_savfi;
  for (auto [b, p] : pv_node_phases(model)) pv_savfi.push_back(m.savfi[b][index(p)]);
  if (!pv_savfi.empty()) {
    std::sort(pv_savfi.begin(), pv_savfi.end());
    const std::size_t n = pv_savfi.size();
    m.median_pv_savfi = n % 2 ? pv_savfi[n / 2] : 0.5 * (pv_savfi[n / 2 - 1] + pv_savfi[n / 2]);
  }
  m.violations = count_violations(model, res.ticks);
  for (const SwitchEvent& e : res.events) {
    const bool is_reg = std::any_of(model.regulators.begin(), model.regulators.end(),
                                    [&](const Regulator& r) { return r.id == e.device; });
    if (is_reg) m.tap_operations += std::abs(e.new_state - e.old_state);
    else ++m.cap_operations;
  }
  const double hours = config.local_period / 60.0, kw = model.base_kw_per_phase();
  for (const TickRecord& t : res.ticks) {
    m.substation_kwh += t.audit.source.real() * hours * kw;
    m.load_kwh += t.audit.load.real() * hours * kw;
    m.loss_kwh += t.audit.losses.real() * hours * kw;
    m.pv_kwh += t.audit.pv.real() * hours * kw;
  }
  return res;
}

ScenarioResult run_two_timescale(const ScenarioConfig& config) {
  const FeederModel model = load_feeder(config.feeder);
  const ProfileSet profiles = ProfileSet::load_csv(config.profiles);
  return run_two_timescale(config, model, profiles);
}

// ---------------------------------------------------------------------------
// artifacts

std::vector<std::string> write_artifacts(const FeederModel& model, const ScenarioResult& result,
                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw InputError("cannot write " + (dir / name).string());
    return f;
  };
  char buf[128];

  {
    auto f = open("voltages.csv");
    f << "minute,bus,phase,v_pu\n";
    for (const TickRecord& t : result.ticks)
      for (std::size_t b = 0; b < model.buses.size(); ++b)
        for (Phase p : kAllPhases) {
          if (!model.buses[b].phases.has(p)) continue;
          std::snprintf(buf, sizeof buf, "%.10f", t.vmag[b][index(p)]);
          f << fmt_num(t.minute) << ',' << model.buses[b].id << ',' << to_char(p) << ',' << buf << '\n';
        }
  }
  {
    auto f = open("setpoints.csv");
    f << "interval,minute,kind,device,phase,value\n";
    for (const IntervalRecord& iv : result.intervals) {
      const std::string head = std::to_string(iv.index) + "," + fmt_num(iv.minute) + ",";
      for (std::size_t r = 0; r < model.regulators.size(); ++r)
        for (Phase p : kAllPhases)
          if (model.regulators[r].phases.has(p))
            f << head << "tap," << model.regulators[r].id << ',' << to_char(p) << ',' << iv.setpoints.taps[r][index(p)] << '\n';
      for (std::size_t c = 0; c < model.capacitors.size(); ++c)
        for (Phase p : kAllPhases)
          if (model.capacitors[c].phases.has(p))
            f << head << "cap," << model.capacitors[c].id << ',' << to_char(p) << ',' << (iv.setpoints.cap_on[c][index(p)] ? 1 : 0)
              << '\n';
      for (std::size_t u = 0; u < model.pvs.size(); ++u)
        for (Phase p : kAllPhases)
          if (model.pvs[u].phases.has(p)) {
            std::snprintf(buf, sizeof buf, "%.10f", iv.setpoints.pv_q[u][index(p)]);
            f << head << "q," << model.pvs[u].id << ',' << to_char(p) << ',' << buf << '\n';
          }
      for (std::size_t b = 0; b < model.buses.size() && !iv.setpoints.v_ref.empty(); ++b)
        for (Phase p : kAllPhases)
          if (model.buses[b].phases.has(p)) {
            std::snprintf(buf, sizeof buf, "%.10f", iv.setpoints.v_ref[b][index(p)]);
            f << head << "vref," << model.buses[b].id << ',' << to_char(p) << ',' << buf << '\n';
          }
      std::snprintf(buf, sizeof buf, "%.10f", iv.objective);
      f << head << "objective,,," << buf << '\n';
    }
  }
  {
    auto f = open("events.csv");
    f << "minute,device,phase,old,new\n";
    for (const SwitchEvent& e : result.events)
      f << fmt_num(e.minute) << ',' << e.device << ',' << e.phase << ',' << e.old_state << ',' << e.new_state << '\n';
  }
  {
    auto f = open("metrics.csv");
    const ScenarioMetrics& m = result.metrics;
    f << "metric,bus,phase,value\n";
    auto row = [&](const std::string& name, double v) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      f << name << ",,," << buf << '\n';
    };
    row("median_pv_savfi", m.median_pv_savfi);
    row("violation_node_phase_ticks", static_cast<double>(m.violations.node_phase_ticks));
    row("violated_node_phases", static_cast<double>(m.violations.unique_node_phases));
    row("violated_buses", static_cast<double>(m.violations.unique_buses));
    row("tap_operations", static_cast<double>(m.tap_operations));
    row("cap_operations", static_cast<double>(m.cap_operations));
    row("switching_operations", static_cast<double>(m.tap_operations + m.cap_operations));
    row("substation_kwh", m.substation_kwh);
    row("load_kwh", m.load_kwh);
    row("loss_kwh", m.loss_kwh);
    row("pv_kwh", m.pv_kwh);
    row("milp_solves", m.milp_solves);
    for (std::size_t b = 0; b < model.buses.size(); ++b)
      for (Phase p : kAllPhases)
        if (model.buses[b].phases.has(p)) {
          std::snprintf(buf, sizeof buf, "%.10g", m.savfi[b][index(p)]);
          f << "savfi," << model.buses[b].id << ',' << to_char(p) << ',' << buf << '\n';
        }
  }
  return {"voltages.csv", "setpoints.csv", "events.csv", "metrics.csv"};
}

} // namespace cvr
