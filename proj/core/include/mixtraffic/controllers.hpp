#pragma once

#include <array>
#include <bitset>
#include <string_view>
#include <vector>

#include "mixtraffic/action.hpp"
#include "mixtraffic/netmodel.hpp"
#include "mixtraffic/random.hpp"
#include "mixtraffic/world.hpp"

namespace mixtraffic {

struct SignalPhase {
  std::bitset<4> served;  // sides with green, indexed by side_index
  double green = 0.0;
  double clearance = 0.0;  // all-red after the green
};

// Pre-timed plan. cycle_length is the sum of phase durations.
struct SignalPlan {
  std::vector<SignalPhase> phases;

  double cycle_length() const;
  // Throws std::invalid_argument unless every present side is served, all
  // durations are sane and the cycle is positive.
  void validate(std::bitset<4> present_sides) const;

  // Two phases of 28 s green + 2 s all-red. Four-way: N-S then E-W. Three-way:
  // the two opposing sides together, then the stem alone.
  static SignalPlan default_for(const Intersection& node);
};

enum class SignalColor : std::uint8_t { Green, Red };

std::array<SignalColor, 4> signal_state(const SignalPlan& plan, double t);

struct GapAcceptanceParams {
  double critical_entry_headway = 1.0;  // s since the last conflicting core entry
  double stop_pause = 1.0;              // s at rest on the stop line before entering
  void validate() const;
};

enum class ControlMode : std::uint8_t {
  Signalized,    // every vehicle obeys pre-timed signals
  AllWayStop,    // every vehicle obeys the all-way-stop rule
  RvControlled,  // RVs follow stop/go commands; HVs obey the all-way-stop rule
};

struct ControllerSet {
  ControlMode mode = ControlMode::RvControlled;
  std::vector<SignalPlan> plans;  // per intersection, dense index; Signalized only
  GapAcceptanceParams stop_rule;

  static ControllerSet signalized(const RoadNetwork& net);
  static ControllerSet all_way_stop(const RoadNetwork& net);
  static ControllerSet rv_controlled(const RoadNetwork& net);
};

enum class StopDecision : std::uint8_t { Hold, Proceed };

// All-way-stop rule for the queue leader `vehicle`: after pausing on the stop
// line it may enter iff no conflicting movement occupies the core (or entered
// it within the critical headway) and no conflicting approach has a leader
// that arrived earlier and could itself clear the core. Ties go to the lower
// side index (N < E < S < W). Entry also needs exit_has_room.
// With `hv_priority_only`, only HV leaders count as competitors.
StopDecision allway_stop_decision(const WorldState& world, const VehicleState& vehicle,
                                  const GapAcceptanceParams& params, bool hv_priority_only = false);

// True when the vehicle's next segment has space for it to clear the core
// behind the current tail and any vehicles already crossing toward it. Always
// true on the last segment of a route.
bool exit_has_room(const WorldState& world, const VehicleState& vehicle);

// True when the vehicle is at rest within 0.5 m of its stop line.
bool at_stop_line(const RoadNetwork& net, const VehicleState& vehicle);

// Stop or Go with probability 1/2 each.
Action random_rv_policy(Rng& rng);

}  // namespace mixtraffic
