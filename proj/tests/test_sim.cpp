#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvr/sim.hpp"
#include "support/models.hpp"

using namespace cvr;
using namespace cvr::testing;
namespace fs = std::filesystem;

namespace {

ScenarioConfig short_run(double variability, ControllerMode mode, double start = 660.0, double horizon = 60.0) {
  ScenarioConfig c;
  c.name = "unit";
  c.feeder = data_path("feeder13.feeder");
  c.start_minute = start;
  c.horizon = horizon;
  c.variability = variability;
  c.seed = 7;
  c.controller = mode;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ComplexState flat_state(const FeederModel& m, double mag) {
  ComplexState s;
  s.V.assign(m.buses.size(), PerPhase<Complex>{});
  for (std::size_t b = 0; b < m.buses.size(); ++b)
    for (Phase p : kAllPhases)
      if (m.buses[b].phases.has(p)) s.V[b][index(p)] = mag * nominal_phasor(p);
  return s;
}

double pv_savfi(const ScenarioResult& r, std::size_t bus, Phase p) { return r.metrics.savfi[bus][index(p)]; }

} // namespace

TEST_CASE("clear sky profile") {
  auto s = clear_sky_profile(2.0, 1440.0, 360.0, 1080.0);
  REQUIRE(s.size() == 1441);
  CHECK(s[0] == 0.0);
  CHECK(s[720] == doctest::Approx(2.0));
  CHECK(s[540] == doctest::Approx(1.0));
  CHECK(s[1200] == 0.0);
  CHECK_THROWS_AS(clear_sky_profile(1.0, 1440.0, 800.0, 700.0), InputError);
}

TEST_CASE("three-sigma variability") {
  auto base = clear_sky_profile(1.0, 1440.0, 360.0, 1080.0);
  CHECK(apply_variability(base, 0.0, 3, 1.0) == base);
  for (double v : {30.0, 70.0}) {
    auto noisy = apply_variability(base, v, 42, 1.0);
    bool moved = false;
    for (std::size_t t = 0; t < base.size(); ++t) {
      CHECK(noisy[t] >= 0.0);
      CHECK(noisy[t] <= 1.0);
      if (base[t] > 1e-9 && noisy[t] < 1.0) {
        const double ratio = noisy[t] / base[t];
        CHECK(ratio >= 1.0 - v / 100.0 - 1e-12);
        CHECK(ratio <= 1.0 + v / 100.0 + 1e-12);
      }
      moved = moved || noisy[t] != base[t];
    }
    CHECK(moved);
  }
  CHECK(apply_variability(base, 30.0, 42, 1.0) == apply_variability(base, 30.0, 42, 1.0));
  CHECK(apply_variability(base, 30.0, 42, 1.0) != apply_variability(base, 30.0, 43, 1.0));
}

TEST_CASE("savfi") {
  CHECK(savfi({1.0, 1.01, 0.99}) == doctest::Approx(0.015));
  CHECK(savfi({1.02, 1.02, 1.02, 1.02}) == 0.0);
  CHECK_THROWS_AS(savfi({1.0}), InputError);
}

TEST_CASE("autonomous legacy step") {
  const FeederModel& m = fixture();
  LegacyState st = LegacyState::initial(m);
  ComplexState in_band = flat_state(m, 1.0);
  CHECK(autonomous_legacy_step(m, st, in_band, 0.0).empty());

  ComplexState low = flat_state(m, 0.97);
  CHECK(autonomous_legacy_step(m, st, low, 1.0).empty());
  auto ev = autonomous_legacy_step(m, st, low, 2.0);
  CHECK(st.taps[0] == PerPhase<int>{kNeutralTap + 1, kNeutralTap + 1, kNeutralTap + 1});
  REQUIRE(ev.size() == 3); // regulator and both banks
  CHECK(ev[0].device == "R1");
  CHECK(ev[0].old_state == kNeutralTap);
  CHECK(ev[0].new_state == kNeutralTap + 1);
  CHECK(st.cap_on[0][0]);
  CHECK(st.cap_on[1][index(Phase::c)]);

  // one low tick, then back in band: the timer restarts
  CHECK(autonomous_legacy_step(m, st, low, 3.0).empty());
  CHECK(autonomous_legacy_step(m, st, in_band, 4.0).empty());
  CHECK(autonomous_legacy_step(m, st, low, 5.0).empty());

  ComplexState high = flat_state(m, 1.03);
  CHECK(autonomous_legacy_step(m, st, high, 6.0).empty());
  ev = autonomous_legacy_step(m, st, high, 7.0);
  CHECK(st.taps[0][0] == kNeutralTap);
  CHECK_FALSE(st.cap_on[0][0]);
  CHECK(ev.size() == 3);
}

TEST_CASE("violation counting") {
  const FeederModel& m = fixture();
  TickRecord t;
  t.vmag.assign(m.buses.size(), PerPhase<double>{1.0, 1.0, 1.0});
  std::vector<TickRecord> ticks{t, t};
  CHECK(count_violations(m, ticks).node_phase_ticks == 0);
  const std::size_t n06 = m.bus_index("n06");
  ticks[0].vmag[n06][0] = 1.06;
  ticks[1].vmag[n06][0] = 0.94;
  ticks[1].vmag[n06][1] = 0.5; // absent phase, ignored
  ViolationCount vc = count_violations(m, ticks);
  CHECK(vc.node_phase_ticks == 2);
  CHECK(vc.per_tick == std::vector<long>{1, 1});
  CHECK(vc.unique_node_phases == 1);
  CHECK(vc.unique_buses == 1);
}

TEST_CASE("scenario config") {
  ScenarioConfig c = ScenarioConfig::parse("# c\nname = x\nfeeder = f.feeder\nvariability = 30\nseed = 9\n"
                                           "controller = measurement\nlegacy = centralized\nhorizon = 120\n",
                                           "/tmp/base");
  CHECK(c.name == "x");
  CHECK(fs::path(c.feeder) == fs::path("/tmp/base/f.feeder"));
  CHECK(c.variability == 30.0);
  CHECK(c.seed == 9);
  CHECK(c.controller == ControllerMode::measurement);
  CHECK(ScenarioConfig::parse(c.serialize(), "/tmp/base").serialize() == c.serialize());

  CHECK_THROWS_AS(ScenarioConfig::parse("colour = blue\n"), InputError);
  CHECK_THROWS_AS(ScenarioConfig::parse("variability = lots\n"), InputError);
  CHECK_THROWS_AS(ScenarioConfig::parse("controller = fuzzy\n"), InputError);
  CHECK_THROWS_AS(ScenarioConfig::parse("no equals sign\n"), InputError);
  auto bad = [](auto edit) {
    ScenarioConfig s;
    s.feeder = "x";
    edit(s);
    return s;
  };
  CHECK_THROWS_AS(bad([](ScenarioConfig& s) { s.variability = 120; }).check(), InputError);
  CHECK_THROWS_AS(bad([](ScenarioConfig& s) { s.local_period = 4; }).check(), InputError);
  CHECK_THROWS_AS(bad([](ScenarioConfig& s) {
                    s.legacy = LegacyMode::autonomous;
                    s.controller = ControllerMode::impedance;
                  }).check(),
                  InputError);
  CHECK_NOTHROW(bad([](ScenarioConfig&) {}).check());
}

TEST_CASE("zero variability tracks the plan") {
  const FeederModel& m = fixture();
  ScenarioResult r = run_two_timescale(short_run(0.0, ControllerMode::none, 600.0, 50.0), m, fixture_profiles());
  CHECK(r.metrics.milp_solves == 4);
  REQUIRE(r.intervals.size() == 4);
  REQUIRE(r.ticks.size() == 50);
  for (std::size_t k = 1; k < r.ticks.size(); ++k) CHECK(r.ticks[k].minute > r.ticks[k - 1].minute);
  for (const TickRecord& t : r.ticks) {
    const IntervalRecord& iv = r.intervals[static_cast<std::size_t>((t.minute - 600.0) / 15.0)];
    for (std::size_t b = 0; b < m.buses.size(); ++b)
      for (Phase p : kAllPhases)
        if (m.buses[b].phases.has(p)) CHECK(std::abs(t.vmag[b][index(p)] - iv.setpoints.v_ref[b][index(p)]) <= 0.015);
  }
  CHECK(r.metrics.violations.node_phase_ticks == 0);
  const ScenarioMetrics& e = r.metrics;
  CHECK(std::abs(e.substation_kwh - (e.load_kwh + e.loss_kwh - e.pv_kwh)) <= 1e-5 * std::abs(e.substation_kwh));
  long steps = 0, toggles = 0;
  for (const SwitchEvent& ev : r.events) {
    if (ev.device.rfind("R", 0) == 0) steps += std::abs(ev.new_state - ev.old_state);
    else ++toggles;
  }
  CHECK(e.tap_operations == steps);
  CHECK(e.cap_operations == toggles);
}

TEST_CASE("measurement control smooths every PV bus") {
  const FeederModel& m = fixture();
  ScenarioResult none = run_two_timescale(short_run(30.0, ControllerMode::none, 600.0, 120.0), m, fixture_profiles());
  ScenarioResult meas = run_two_timescale(short_run(30.0, ControllerMode::measurement, 600.0, 120.0), m, fixture_profiles());
  for (auto [bus, p] : pv_node_phases(m)) {
    CAPTURE(m.buses[bus].id);
    CHECK(pv_savfi(meas, bus, p) < pv_savfi(none, bus, p));
  }
  CHECK(meas.metrics.median_pv_savfi < none.metrics.median_pv_savfi);
  // PV output is the same realization in both runs
  CHECK(meas.ticks.back().pv_p == none.ticks.back().pv_p);
  // fluctuation grows away from the substation along the phase-a lateral
  const std::size_t n02 = m.bus_index("n02"), n05 = m.bus_index("n05"), n06 = m.bus_index("n06");
  CHECK(pv_savfi(none, n02, Phase::a) <= pv_savfi(none, n05, Phase::a));
  CHECK(pv_savfi(none, n05, Phase::a) <= pv_savfi(none, n06, Phase::a));
}

TEST_CASE("centralized devices hold within an interval") {
  const FeederModel& m = fixture();
  ScenarioResult r = run_two_timescale(short_run(70.0, ControllerMode::impedance, 600.0, 45.0), m, fixture_profiles());
  for (const SwitchEvent& ev : r.events) CHECK(std::fmod(ev.minute - 600.0, 15.0) == 0.0);
}

TEST_CASE("artifacts are deterministic") {
  const FeederModel& m = fixture();
  const fs::path root = fs::temp_directory_path() / "cvr_unit_artifacts";
  fs::remove_all(root);
  ScenarioConfig cfg = short_run(30.0, ControllerMode::impedance, 700.0, 30.0);
  auto files = write_artifacts(m, run_two_timescale(cfg, m, fixture_profiles()), root / "a");
  write_artifacts(m, run_two_timescale(cfg, m, fixture_profiles()), root / "b");
  CHECK(files.size() >= 4);
  for (const std::string& f : files) {
    CAPTURE(f);
    CHECK(!slurp(root / "a" / f).empty());
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
  }
  CHECK(slurp(root / "a" / "voltages.csv").rfind("minute,bus,phase,v_pu", 0) == 0);
  fs::remove_all(root);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
