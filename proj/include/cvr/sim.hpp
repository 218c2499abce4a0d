#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cvr/controls.hpp"
#include "cvr/feeder.hpp"
#include "cvr/milp.hpp"
#include "cvr/oracle.hpp"

namespace cvr {

enum class ControllerMode { none, impedance, measurement };
enum class LegacyMode { centralized, autonomous };

std::string to_string(ControllerMode m);
std::string to_string(LegacyMode m);

struct ScenarioConfig {
  std::string name = "scenario";
  std::string feeder;   // path
  std::string profiles; // path; defaults to <feeder stem>.profiles.csv next to the feeder
  double start_minute = 0.0;
  double horizon = 1440.0;
  double central_period = 15.0;
  double local_period = 1.0;
  double variability = 0.0; // percent
  std::uint64_t seed = 1;
  ControllerMode controller = ControllerMode::none;
  LegacyMode legacy = LegacyMode::centralized;
  double load_scale = 1.0;
  std::string load_profile; // optional profile id scaling every load
  double forecast_fraction = -1.0; // when >= 0, forecast is this fraction of p_max
  double realized_fraction = -1.0; // when >= 0, clear-sky output is replaced by this fraction of p_max
  double vmin_margin = 0.005;
  double q_reserve = 0.3;

  /// Parses `key = value` lines; `#` starts a comment. Relative paths resolve against `base_dir`.
  static ScenarioConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static ScenarioConfig load(const std::string& path);
  /// Canonical key=value rendering (used for hashing and the manifest).
  std::string serialize() const;
  /// Throws InputError when periods or percentages are out of range.
  void check() const;
};

/// p_max sin^2(pi (t - sunrise) / (sunset - sunrise)) inside daylight, zero outside, one sample per minute step.
std::vector<double> clear_sky_profile(double p_max, double horizon, double sunrise, double sunset, double step = 1.0);

/// Multiplies each sample by (1 + e), e ~ N(0, (v/100)/3) truncated to +-v/100, then clamps to [0, p_max].
std::vector<double> apply_variability(const std::vector<double>& series, double variability, std::uint64_t seed,
                                      double p_max);

/// Autonomous regulator and capacitor logic with a two-tick confirmation delay.
struct LegacySettings {
  double regulator_band = 0.0167;
  double cap_on_below = 0.98;
  double cap_off_above = 1.02;
  int delay_ticks = 2;
};

struct LegacyState {
  std::vector<PerPhase<int>> taps;
  std::vector<PerPhase<bool>> cap_on;
  std::vector<PerPhase<int>> reg_timer; // signed: + counting low ticks, - counting high ticks
  std::vector<PerPhase<int>> cap_timer;

  static LegacyState initial(const FeederModel& model);
};

struct SwitchEvent {
  double minute = 0.0;
  std::string device;
  std::string phase; // phase letters, or "abc"-style set for gang devices
  int old_state = 0;
  int new_state = 0;
};

/// Applies one tick of autonomous logic in place and returns the resulting switching actions.
std::vector<SwitchEvent> autonomous_legacy_step(const FeederModel& model, LegacyState& state,
                                                const ComplexState& voltages, double minute,
                                                const LegacySettings& settings = {});

/// (1/T) sum |V(t+1) - V(t)| for a series of T+1 samples. Throws InputError for fewer than 2 samples.
double savfi(const std::vector<double>& series);

struct TickRecord {
  double minute = 0.0;
  std::vector<PerPhase<double>> vmag;  // per bus
  std::vector<PerPhase<double>> pv_p;  // per PV, realized
  std::vector<PerPhase<double>> pv_q;  // per PV, commanded
  PowerAudit audit;
};

struct IntervalRecord {
  int index = 0;
  double minute = 0.0;
  ControlSetpoints setpoints;
  double objective = 0.0;
};

struct ViolationCount {
  long node_phase_ticks = 0;          // sum over ticks of violating node-phases
  std::vector<long> per_tick;         // per tick
  std::size_t unique_node_phases = 0; // distinct node-phases violated at least once
  std::size_t unique_buses = 0;
};

ViolationCount count_violations(const FeederModel& model, const std::vector<TickRecord>& ticks);

struct ScenarioMetrics {
  std::vector<PerPhase<double>> savfi; // per bus-phase, pu x 1e3
  double median_pv_savfi = 0.0;
  ViolationCount violations;
  long tap_operations = 0;
  long cap_operations = 0;
  double substation_kwh = 0.0;
  double load_kwh = 0.0;
  double loss_kwh = 0.0;
  double pv_kwh = 0.0;
  int milp_solves = 0;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<TickRecord> ticks;
  std::vector<IntervalRecord> intervals;
  std::vector<SwitchEvent> events;
  ScenarioMetrics metrics;
};

/// Runs a scenario against an already loaded feeder and profile set.
ScenarioResult run_two_timescale(const ScenarioConfig& config, const FeederModel& model, const ProfileSet& profiles);
/// Loads the feeder and profiles named by the config, then runs it.
ScenarioResult run_two_timescale(const ScenarioConfig& config);

/// Bus-phase pairs carrying at least one PV unit.
std::vector<std::pair<std::size_t, Phase>> pv_node_phases(const FeederModel& model);

/// Writes voltages.csv, setpoints.csv, events.csv and metrics.csv into `dir` (created if needed).
/// Returns the written file names.
std::vector<std::string> write_artifacts(const FeederModel& model, const ScenarioResult& result,
                                         const std::filesystem::path& dir);

/// 64-bit FNV-1a content hash.
std::uint64_t fnv1a(std::string_view data);

} // namespace cvr
