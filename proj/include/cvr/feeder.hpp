#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cvr/errors.hpp"
#include "cvr/phase.hpp"

namespace cvr {

using Complex = std::complex<double>;
using ZMatrix = Eigen::Matrix3cd;

inline constexpr int kTapPositions = 33;
inline constexpr int kNeutralTap = 16;
inline constexpr double kTapStep = 0.00625;

/// Turn ratio of tap position k (0..32): 0.9 + 0.00625 k.
constexpr double tap_ratio(int k) { return 0.9 + kTapStep * k; }

struct Bus {
  std::string id;
  PhaseSet phases;
  double vmin = 0.95;
  double vmax = 1.05;
  bool is_substation = false;
};

struct Line {
  std::string id;
  std::size_t from = 0;
  std::size_t to = 0;
  PhaseSet phases;
  ZMatrix z = ZMatrix::Zero(); // per-unit, zero rows/cols on absent phases
  double s_max = 10.0;         // per-phase, per-unit
};

struct Regulator {
  std::string id;
  std::size_t line = 0;
  PhaseSet phases;
  bool gang_operated = false;
};

struct CapacitorBank {
  std::string id;
  std::size_t bus = 0;
  PhaseSet phases;
  double q_rated = 0.0; // per phase, per-unit at 1 pu voltage
  bool gang_operated = false;
};

struct ZipLoad {
  std::string id;
  std::size_t bus = 0;
  Phase phase = Phase::a;
  double p0 = 0.0;
  double q0 = 0.0;
  std::array<double, 3> kp{0.0, 0.0, 1.0};
  std::array<double, 3> kq{0.0, 0.0, 1.0};
};

struct PvUnit {
  std::string id;
  std::size_t bus = 0;
  PhaseSet phases;
  double p_max = 0.0;   // per phase
  double s_rated = 0.0; // per phase
  std::string profile_ref;
};

/// Immutable per-unit radial feeder. All collections are sorted by id.
class FeederModel {
public:
  double base_mva = 1.0;
  double base_kv = 1.0;

  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Regulator> regulators;
  std::vector<CapacitorBank> capacitors;
  std::vector<ZipLoad> loads;
  std::vector<PvUnit> pvs;

  /// Builds the topology indexes and checks every model invariant. Throws InputError.
  void finalize();

  std::size_t substation() const { return substation_; }
  std::size_t bus_index(std::string_view id) const;
  std::optional<std::size_t> find_bus(std::string_view id) const;

  /// Line feeding `bus`; undefined for the substation.
  std::size_t parent_line(std::size_t bus) const { return parent_line_[bus]; }
  bool has_parent(std::size_t bus) const { return bus != substation_; }

  /// Lines leaving `bus`, ordered by child bus id.
  const std::vector<std::size_t>& child_lines(std::size_t bus) const { return child_lines_[bus]; }

  /// Buses ordered so that every parent precedes its children.
  const std::vector<std::size_t>& topological_order() const { return order_; }

  /// Regulator installed on `line`, if any.
  std::optional<std::size_t> regulator_on(std::size_t line) const;

  /// Load, capacitor and PV indices attached to each bus.
  const std::vector<std::size_t>& loads_at(std::size_t bus) const { return loads_at_[bus]; }
  const std::vector<std::size_t>& capacitors_at(std::size_t bus) const { return caps_at_[bus]; }
  const std::vector<std::size_t>& pvs_at(std::size_t bus) const { return pvs_at_[bus]; }

  double base_impedance() const { return base_kv * base_kv / base_mva; }
  /// Per-phase power base in kW.
  double base_kw_per_phase() const { return base_mva * 1000.0 / 3.0; }

private:
  std::size_t substation_ = 0;
  std::vector<std::size_t> parent_line_;
  std::vector<std::vector<std::size_t>> child_lines_;
  std::vector<std::size_t> order_;
  std::vector<std::optional<std::size_t>> reg_on_line_;
  std::vector<std::vector<std::size_t>> loads_at_;
  std::vector<std::vector<std::size_t>> caps_at_;
  std::vector<std::vector<std::size_t>> pvs_at_;
};

FeederModel parse_feeder(std::string_view text);
FeederModel load_feeder(const std::string& path);

/// Writes the model back in the feeder text format (file units).
std::string serialize_feeder(const FeederModel& model);

struct ChildLink {
  std::size_t line;
  std::size_t bus;
};

/// (line, child bus) pairs leaving `bus_id`, sorted by child id. Throws InputError for an unknown bus.
std::vector<ChildLink> children(const FeederModel& model, std::string_view bus_id);

/// Positive-sequence impedance of one line: mean of present diagonal entries minus
/// mean of present off-diagonal entries.
Complex positive_sequence(const Line& line);

/// Sum of positive-sequence impedances from the substation to `bus`. Shunts and regulators are ignored.
Complex thevenin_impedance(const FeederModel& model, std::size_t bus);
Complex thevenin_impedance(const FeederModel& model, std::string_view bus_id);

/// Time series multipliers keyed by profile id, read from `profile_id,timestamp_minutes,multiplier` CSV.
class ProfileSet {
public:
  struct Sample {
    double minute;
    double multiplier;
  };

  static ProfileSet parse_csv(std::string_view text);
  static ProfileSet load_csv(const std::string& path);

  bool contains(const std::string& id) const { return series_.count(id) != 0; }
  /// Linear interpolation, held constant outside the sampled range.
  double value(const std::string& id, double minute) const;
  const std::map<std::string, std::vector<Sample>>& series() const { return series_; }

  void add(const std::string& id, std::vector<Sample> samples);

private:
  std::map<std::string, std::vector<Sample>> series_;
};

/// Throws InputError naming the first PV profile reference missing from `profiles`.
void check_profile_refs(const FeederModel& model, const ProfileSet& profiles);

std::string read_text_file(const std::string& path);

} // namespace cvr
