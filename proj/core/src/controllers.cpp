#include "mixtraffic/controllers.hpp"

#include <cmath>
#include <stdexcept>

namespace mixtraffic {

double SignalPlan::cycle_length() const {
  double total = 0.0;
  for (const auto& p : phases) total += p.green + p.clearance;
  return total;
}

void SignalPlan::validate(std::bitset<4> present_sides) const {
  if (phases.empty()) throw std::invalid_argument("signal plan has no phases");
  std::bitset<4> served;
  for (const auto& p : phases) {
    if (!(p.green > 0.0)) throw std::invalid_argument("signal phase green must be > 0");
    if (!(p.clearance >= 0.0)) throw std::invalid_argument("signal phase clearance must be >= 0");
    served |= p.served;
  }
  if ((served & present_sides) != present_sides) {
    throw std::invalid_argument("signal plan leaves an approach unserved");
  }
  if (!(cycle_length() > 0.0)) throw std::invalid_argument("signal cycle must be > 0");
}

SignalPlan SignalPlan::default_for(const Intersection& node) {
  constexpr double kGreen = 28.0;
  constexpr double kClear = 2.0;
  auto sides = [](std::initializer_list<Direction> ds) {
    std::bitset<4> b;
    for (const auto d : ds) b[side_index(d)] = true;
    return b;
  };
  SignalPlan plan;
  if (node.kind == IntersectionKind::ThreeWay) {
    // The stem is the side opposite the missing one.
    Direction missing = Direction::North;
    for (const auto d : kAllDirections) {
      if (!node.has_side(d)) missing = d;
    }
    const Direction stem = opposite(missing);
    std::bitset<4> road;
    for (const auto d : kAllDirections) {
      if (node.has_side(d) && d != stem) road[side_index(d)] = true;
    }
    plan.phases = {{road, kGreen, kClear}, {sides({stem}), kGreen, kClear}};
  } else {
    plan.phases = {{sides({Direction::North, Direction::South}), kGreen, kClear},
                   {sides({Direction::East, Direction::West}), kGreen, kClear}};
  }
  return plan;
}

std::array<SignalColor, 4> signal_state(const SignalPlan& plan, double t) {
  std::array<SignalColor, 4> colors;
  colors.fill(SignalColor::Red);
  const double cycle = plan.cycle_length();
  double tau = std::fmod(t, cycle);
  if (tau < 0.0) tau += cycle;
  for (const auto& p : plan.phases) {
    if (tau < p.green) {
      for (int s = 0; s < 4; ++s) {
        if (p.served[static_cast<std::size_t>(s)]) colors[static_cast<std::size_t>(s)] = SignalColor::Green;
      }
      return colors;
    }
    tau -= p.green;
    if (tau < p.clearance) return colors;
    tau -= p.clearance;
  }
  return colors;
}

void GapAcceptanceParams::validate() const {
  if (!(critical_entry_headway > 0.0 && stop_pause > 0.0)) {
    throw std::invalid_argument("gap-acceptance parameters must be positive");
  }
}

ControllerSet ControllerSet::signalized(const RoadNetwork& net) {
  ControllerSet c;
  c.mode = ControlMode::Signalized;
  for (const auto& node : net.intersections()) {
    c.plans.push_back(node.is_boundary() ? SignalPlan{} : SignalPlan::default_for(node));
  }
  return c;
}

ControllerSet ControllerSet::all_way_stop(const RoadNetwork&) {
  ControllerSet c;
  c.mode = ControlMode::AllWayStop;
  return c;
}

ControllerSet ControllerSet::rv_controlled(const RoadNetwork&) {
  ControllerSet c;
  c.mode = ControlMode::RvControlled;
  return c;
}

bool exit_has_room(const WorldState& world, const VehicleState& vehicle) {
  const auto& net = world.network();
  const auto next = vehicle.next_segment();
  if (!next) return true;
  const double slot = kVehicleLength + world.idm.min_gap;
  double needed = kCoreRadius + slot;
  const auto& seg = net.segment(vehicle.segment());
  for (const auto sid : net.intersection(seg.to).approaches) {
    if (sid == seg.id) continue;
    for (const auto idx : world.lanes[net.index_of(sid)]) {
      const auto& other = world.vehicles[idx];
      if (other.position > stop_line_of(net.segment(sid)) && other.next_segment() == next) needed += slot;
    }
  }
  const auto& lane = world.lanes[net.index_of(*next)];
  if (lane.empty()) return true;
  return world.vehicles[lane.back()].position >= needed;
}

bool at_stop_line(const RoadNetwork& net, const VehicleState& vehicle) {
  const double line = stop_line_of(net.segment(vehicle.segment()));
  return vehicle.speed < kStopSpeed && vehicle.position <= line && vehicle.position >= line - 0.5;
}

StopDecision allway_stop_decision(const WorldState& world, const VehicleState& vehicle,
                                  const GapAcceptanceParams& params, bool hv_priority_only) {
  const auto& net = world.network();
  if (!vehicle.stop_line_arrival || !at_stop_line(net, vehicle)) return StopDecision::Hold;
  if (world.time - *vehicle.stop_line_arrival < params.stop_pause - 1e-9) return StopDecision::Hold;
  if (!exit_has_room(world, vehicle)) return StopDecision::Hold;
  const auto where = movement_at_head(net, vehicle);
  if (!where) return StopDecision::Proceed;  // leaving the network
  const auto [node_id, mine] = *where;
  const auto node_idx = net.index_of(node_id);
  const auto& cm = world.conflict_matrices[node_idx];

  for (const auto& occ : world.core_occupancy[node_idx]) {
    if (occ.vehicle != vehicle.id && cm.conflicts(mine, occ.movement)) return StopDecision::Hold;
  }
  const auto& entries = world.last_core_entry[node_idx];
  for (const auto from : kAllDirections) {
    for (const auto to : kAllDirections) {
      const Movement other{from, to};
      if (!cm.valid(other) || !cm.conflicts(mine, other)) continue;
      if (world.time - entries[static_cast<std::size_t>(side_index(from) * 4 + side_index(to))] <
          params.critical_entry_headway) {
        return StopDecision::Hold;
      }
    }
  }

  const auto& node = net.intersection(node_id);
  for (const auto side : kAllDirections) {
    if (side == mine.from || !node.has_side(side)) continue;
    const auto leader_idx = queue_leader(world, *node.approach_by_side[side_index(side)]);
    if (!leader_idx) continue;
    const auto& other = world.vehicles[*leader_idx];
    if (hv_priority_only && other.is_rv()) continue;
    if (!other.stop_line_arrival || !at_stop_line(net, other)) continue;
    // A competitor that cannot clear the core does not hold priority.
    if (!exit_has_room(world, other)) continue;
    const auto theirs = movement_at_head(net, other);
    if (!theirs || !cm.conflicts(mine, theirs->second)) continue;
    const double a = *other.stop_line_arrival;
    const double b = *vehicle.stop_line_arrival;
    if (a < b || (a == b && side_index(side) < side_index(mine.from))) return StopDecision::Hold;
  }
  return StopDecision::Proceed;
}

Action random_rv_policy(Rng& rng) { return rng.uniform() < 0.5 ? Action::Stop : Action::Go; }

}  // namespace mixtraffic
