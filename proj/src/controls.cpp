#include "cvr/controls.hpp"

#include <algorithm>
#include <cmath>

namespace cvr {

ControlSetpoints ControlSetpoints::neutral(const FeederModel& model) {
  ControlSetpoints c;
  c.taps.assign(model.regulators.size(), {kNeutralTap, kNeutralTap, kNeutralTap});
  c.cap_on.assign(model.capacitors.size(), {false, false, false});
  c.pv_q.assign(model.pvs.size(), {0.0, 0.0, 0.0});
  return c;
}

void ControlSetpoints::check(const FeederModel& model) const {
  if (taps.size() != model.regulators.size() || cap_on.size() != model.capacitors.size() || pv_q.size() != model.pvs.size())
    throw InputError("control setpoints do not match the feeder's device counts");
  if (!v_ref.empty() && v_ref.size() != model.buses.size()) throw InputError("reference voltages do not match the bus count");
  for (const auto& t : taps)
    for (int k : t)
      if (k < 0 || k >= kTapPositions) throw InputError("regulator tap out of range 0..32");
}

double reactive_capability(double s_rated, double p) { return std::sqrt(std::max(0.0, s_rated * s_rated - p * p)); }

} // namespace cvr
