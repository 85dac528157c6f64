#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "mixtraffic/ids.hpp"
#include "mixtraffic/netmodel.hpp"
#include "mixtraffic/random.hpp"

namespace mixtraffic {

inline constexpr double kVehicleLength = 5.0;   // m
inline constexpr double kStopSpeed = 0.1;       // m/s; below this a vehicle is stationary
inline constexpr double kCoreRadius = 10.0;     // m; intersection box around the node center
inline constexpr double kSpawnClearance = 10.0; // m; entry blocked while a vehicle is this close
inline constexpr double kStepSeconds = 0.5;     // dynamics step

enum class VehicleClass : std::uint8_t { HV, RV };
enum class PendingAction : std::uint8_t { None, Stop, Go };

struct VehicleState {
  VehicleId id{};
  VehicleClass cls = VehicleClass::HV;
  std::vector<SegmentId> route;
  std::size_t segment_index = 0;
  double position = 0.0;  // front bumper, meters from the segment tail
  double speed = 0.0;
  std::optional<double> stationary_since;
  double accumulated_wait = 0.0;  // whole trip, control zones only
  double zone_wait = 0.0;         // wait accrued in the zone currently occupied
  PendingAction pending_action = PendingAction::None;

  double spawn_time = 0.0;
  bool exited = false;
  // Time the vehicle came to rest at the stop line of its current segment.
  std::optional<double> stop_line_arrival;
  // Route index whose stop line this vehicle has been cleared to cross.
  std::optional<std::size_t> cleared_index;
  double last_decision_time = -std::numeric_limits<double>::infinity();

  SegmentId segment() const { return route[segment_index]; }
  std::optional<SegmentId> next_segment() const {
    if (segment_index + 1 < route.size()) return route[segment_index + 1];
    return std::nullopt;
  }
  std::optional<SegmentId> previous_segment() const {
    if (segment_index > 0) return route[segment_index - 1];
    return std::nullopt;
  }
  bool is_rv() const { return cls == VehicleClass::RV; }
  bool cleared() const { return cleared_index && *cleared_index == segment_index; }
};

struct IdmParams {
  double desired_speed = 13.9;  // v0
  double max_accel = 1.5;       // a
  double comfortable_decel = 2.0;  // b
  double min_gap = 2.0;         // s0
  double headway = 1.2;         // T
  double accel_exponent = 4.0;  // delta
  double max_decel = 4.5;       // b_max, lower clamp of the acceleration

  void validate() const;
};

struct Leader {
  double speed = 0.0;
  double gap = 0.0;  // bumper-to-bumper, meters
};

// Intelligent Driver Model acceleration, clamped to [-max_decel, max_accel].
// Throws std::invalid_argument when a leader is given with gap <= 0.
double idm_accel(double v, std::optional<Leader> leader, const IdmParams& p);

struct MotionDirective {
  enum class Kind : std::uint8_t { FollowIdm, HoldAt, Proceed };
  Kind kind = Kind::FollowIdm;
  std::optional<Leader> leader;
  // HoldAt only: stop-line position on the current segment.
  double stop_line = 0.0;
  // Upper bound on the new position, measured on the current segment (may
  // exceed its length when the constraining vehicle is on the next segment).
  double max_position = std::numeric_limits<double>::infinity();
  // Speed of the vehicle defining max_position.
  double max_position_speed = 0.0;

  static MotionDirective follow(std::optional<Leader> leader) { return {Kind::FollowIdm, leader}; }
  static MotionDirective proceed(std::optional<Leader> leader) { return {Kind::Proceed, leader}; }
  static MotionDirective hold_at(double stop_line, std::optional<Leader> leader) {
    return {Kind::HoldAt, leader, stop_line};
  }
};

// True when `position` on `seg` lies inside a control zone: within the zone
// radius of a non-boundary endpoint.
bool in_control_zone(const RoadNetwork& net, const RoadSegment& seg, double position);

// Intersection whose control zone contains the position, if any.
std::optional<IntersectionId> zone_at(const RoadNetwork& net, const RoadSegment& seg, double position);

inline double stop_line_of(const RoadSegment& seg) { return seg.length - kCoreRadius; }

// One semi-implicit Euler step. `now` is the simulation time at the start of
// the step. Waiting accrues when the vehicle ends the step inside a control
// zone with speed < kStopSpeed. Exhausting the route marks the vehicle exited.
VehicleState advance(VehicleState vehicle, const MotionDirective& command, double dt, double now,
                     const RoadNetwork& net, const IdmParams& params);

struct EntryDemand {
  IntersectionId intersection{};
  double rate = 0.0;  // vehicles per second
};

struct DemandConfig {
  std::vector<EntryDemand> entries;
  double rv_penetration = 0.6;
  std::uint64_t seed = 0;

  void validate(const RoadNetwork& net) const;
  // Same rate at every entry of the network.
  static DemandConfig uniform(const RoadNetwork& net, double rate, double rv_penetration,
                              std::uint64_t seed = 0);
};

// Spawns vehicles at boundary entries. Arrivals are Bernoulli per step with
// probability 1 - exp(-rate * dt); an arrival whose entry is blocked waits in a
// per-entry backlog and is emitted as soon as the entry clears.
class Spawner {
 public:
  Spawner(const RoadNetwork& net, DemandConfig demand);

  // `blocked(entry segment)` reports whether the entry is obstructed.
  std::vector<VehicleState> spawn_step(Rng& rng, double t, double dt,
                                       const std::function<bool(SegmentId)>& blocked);

  std::uint64_t spawned_total() const { return next_id_; }
  std::size_t backlog_size() const;
  const DemandConfig& demand() const { return demand_; }

 private:
  struct Pending {
    VehicleClass cls;
    std::vector<SegmentId> route;
    double arrival_time;
  };
  struct Entry {
    IntersectionId node;
    double rate;
    std::vector<std::vector<SegmentId>> routes;  // one per reachable exit != node
    std::deque<Pending> backlog;
  };

  const RoadNetwork* net_;
  DemandConfig demand_;
  std::vector<Entry> entries_;
  std::uint64_t next_id_ = 0;
};

}  // namespace mixtraffic
