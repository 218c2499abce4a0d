#pragma once

#include <vector>

#include "cvr/feeder.hpp"

namespace cvr {

/// Device commands for one decision interval.
struct ControlSetpoints {
  std::vector<PerPhase<int>> taps;       // per regulator; gang regulators repeat one value
  std::vector<PerPhase<bool>> cap_on;    // per capacitor; gang banks repeat one value
  std::vector<PerPhase<double>> pv_q;    // per PV, reactive injection (pu)
  std::vector<PerPhase<double>> v_ref;   // per bus, reference magnitude (pu); empty when unknown

  /// Taps at ratio 1.0, capacitors off, unity power factor, no references.
  static ControlSetpoints neutral(const FeederModel& model);

  double ratio(std::size_t regulator, Phase p) const { return tap_ratio(taps[regulator][index(p)]); }

  /// Throws InputError when a vector is sized for a different model or a tap is out of range.
  void check(const FeederModel& model) const;
};

/// Exogenous conditions for a power-flow evaluation.
struct OperatingPoint {
  double load_scale = 1.0;
  std::vector<PerPhase<double>> pv_p; // per PV active output (pu); empty means zero

  double pv(std::size_t unit, Phase p) const { return pv_p.empty() ? 0.0 : pv_p[unit][index(p)]; }
};

/// Reactive capability sqrt(max(0, s^2 - p^2)).
double reactive_capability(double s_rated, double p);

} // namespace cvr
