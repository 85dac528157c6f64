#pragma once

#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "mixtraffic/action.hpp"
#include "mixtraffic/controllers.hpp"
#include "mixtraffic/world.hpp"

namespace mixtraffic {

using CommandMap = std::map<VehicleId, Action>;

class CommandError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StepOutcome {
  std::vector<ConflictEvent> conflicts;
  std::vector<VehicleId> exited;
  std::vector<VehicleId> spawned;
};

// Advances the world by one dynamics step (world.dt). Sub-update order:
//   1. spawn at entries,
//   2. resolve controller rules and RV commands into motion directives,
//   3. advance vehicles in ascending segment id, front-most first within a
//      segment (accelerations from the pre-step snapshot, overlap clamps
//      against already-updated positions),
//   4. recompute core occupancy,
//   5. emit conflict events for pairs formed by new core entrants,
//   6. sample metrics.
// Throws CommandError for commands naming absent or non-RV vehicles.
StepOutcome step(WorldState& world, const CommandMap& rv_commands, const ControllerSet& controllers);

// Conflicting pairs formed by vehicles in `current` that were not in
// `previous`. One event per unordered pair; pairs already together in the
// previous step do not fire again.
std::vector<ConflictEvent> detect_conflicts(const std::vector<CoreOccupant>& previous,
                                            const std::vector<CoreOccupant>& current, const ConflictMatrix& cm,
                                            IntersectionId at, double time);

// Line-oriented trace of vehicle states, one record per vehicle per step.
class TraceWriter {
 public:
  static constexpr int kSchemaVersion = 1;
  explicit TraceWriter(std::ostream& out);
  void write(const WorldState& world);

 private:
  std::ostream* out_;
};

}  // namespace mixtraffic
