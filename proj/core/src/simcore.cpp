#include "mixtraffic/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <string>

namespace mixtraffic {

namespace {

std::optional<Leader> snapshot_leader(const WorldState& w, const std::vector<std::size_t>& lane, std::size_t pos) {
  const auto& net = w.network();
  const auto& v = w.vehicles[lane[pos]];
  if (pos > 0) {
    const auto& ahead = w.vehicles[lane[pos - 1]];
    return Leader{ahead.speed, ahead.position - kVehicleLength - v.position};
  }
  const auto next = v.next_segment();
  if (!next) return std::nullopt;
  const auto& next_lane = w.lanes[net.index_of(*next)];
  if (next_lane.empty()) return std::nullopt;
  const auto& tail = w.vehicles[next_lane.back()];
  const double to_end = net.segment(v.segment()).length - v.position;
  return Leader{tail.speed, to_end + tail.position - kVehicleLength};
}

struct Resolved {
  MotionDirective directive;
  bool grant = false;
};

Resolved resolve(const WorldState& w, std::size_t idx, std::optional<Leader> leader, const ControllerSet& ctl) {
  const auto& net = w.network();
  const auto& v = w.vehicles[idx];
  const auto& seg = net.segment(v.segment());
  const auto& head = net.intersection(seg.to);
  if (head.is_boundary()) return {MotionDirective::follow(leader)};
  const double line = stop_line_of(seg);
  if (v.position > line) return {MotionDirective::proceed(leader)};  // inside the core: committed

  const auto leader_idx = queue_leader(w, seg.id);
  const bool is_leader = leader_idx && *leader_idx == idx;

  const double gap = line - v.position;
  const bool cannot_stop = v.speed >= kStopSpeed && v.speed * v.speed > 2.0 * w.idm.max_decel * gap;

  if (ctl.mode == ControlMode::RvControlled && v.is_rv()) {
    if (is_leader && v.pending_action == PendingAction::Go && (cannot_stop || exit_has_room(w, v))) {
      return {MotionDirective::proceed(leader)};
    }
    return {MotionDirective::hold_at(line, leader)};
  }

  if (ctl.mode == ControlMode::Signalized) {
    if (cannot_stop) return {MotionDirective::proceed(leader)};
    const auto colors = signal_state(ctl.plans[net.index_of(head.id)], w.time);
    if (colors[static_cast<std::size_t>(side_index(seg.arrival_side))] == SignalColor::Green &&
        exit_has_room(w, v)) {
      return {MotionDirective::proceed(leader)};
    }
    return {MotionDirective::hold_at(line, leader)};
  }

  if (v.cleared()) return {MotionDirective::proceed(leader)};
  if (is_leader &&
      allway_stop_decision(w, v, ctl.stop_rule, ctl.mode == ControlMode::RvControlled) == StopDecision::Proceed) {
    return {MotionDirective::proceed(leader), true};
  }
  return {MotionDirective::hold_at(line, leader)};
}

}  // namespace

std::vector<ConflictEvent> detect_conflicts(const std::vector<CoreOccupant>& previous,
                                            const std::vector<CoreOccupant>& current, const ConflictMatrix& cm,
                                            IntersectionId at, double time) {
  auto was_present = [&](VehicleId id) {
    return std::any_of(previous.begin(), previous.end(), [&](const CoreOccupant& o) { return o.vehicle == id; });
  };
  std::vector<char> fresh(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) fresh[i] = !was_present(current[i].vehicle);

  std::vector<ConflictEvent> events;
  for (std::size_t i = 0; i < current.size(); ++i) {
    for (std::size_t j = i + 1; j < current.size(); ++j) {
      if (!fresh[i] && !fresh[j]) continue;
      if (!cm.conflicts(current[i].movement, current[j].movement)) continue;
      auto a = current[i].vehicle;
      auto b = current[j].vehicle;
      if (to_int(b) < to_int(a)) std::swap(a, b);
      events.push_back({time, at, a, b});
    }
  }
  std::sort(events.begin(), events.end(), [](const ConflictEvent& x, const ConflictEvent& y) {
    return std::pair{to_int(x.first), to_int(x.second)} < std::pair{to_int(y.first), to_int(y.second)};
  });
  return events;
}

StepOutcome step(WorldState& w, const CommandMap& rv_commands, const ControllerSet& controllers) {
  const auto& net = w.network();
  const double t = w.time;
  const double dt = w.dt;
  StepOutcome out;

  for (const auto& [id, action] : rv_commands) {
    const auto* v = w.find(id);
    if (!v) throw CommandError("command for absent vehicle " + std::to_string(to_int(id)));
    if (!v->is_rv()) throw CommandError("command for non-RV vehicle " + std::to_string(to_int(id)));
  }

  // (1) spawn
  auto blocked = [&](SegmentId s) {
    const auto& lane = w.lanes[net.index_of(s)];
    if (lane.empty()) return false;
    return w.vehicles[lane.back()].position - kVehicleLength < kSpawnClearance;
  };
  auto fresh = w.spawner.spawn_step(w.rng, t, dt, blocked);
  for (auto& v : fresh) {
    const auto& seg = net.segment(v.segment());
    v.speed = std::min(w.idm.desired_speed, seg.speed_limit);
    const auto& lane = w.lanes[net.index_of(seg.id)];
    if (!lane.empty()) v.speed = std::min(v.speed, w.vehicles[lane.back()].speed);
    out.spawned.push_back(v.id);
    w.vehicles.push_back(std::move(v));
  }
  if (!fresh.empty()) w.reindex();

  for (const auto& [id, action] : rv_commands) {
    auto* v = w.find(id);
    v->pending_action = action == Action::Go ? PendingAction::Go : PendingAction::Stop;
    v->last_decision_time = t;
  }

  // (2) directives from the pre-step snapshot
  const auto n = w.vehicles.size();
  std::vector<MotionDirective> directives(n);
  std::vector<std::size_t> grants;
  for (const auto& lane : w.lanes) {
    for (std::size_t k = 0; k < lane.size(); ++k) {
      const auto idx = lane[k];
      auto r = resolve(w, idx, snapshot_leader(w, lane, k), controllers);
      directives[idx] = r.directive;
      if (r.grant) grants.push_back(idx);
    }
  }
  for (const auto idx : grants) w.vehicles[idx].cleared_index = w.vehicles[idx].segment_index;

  // (3) advance
  std::vector<VehicleState> before = w.vehicles;
  std::vector<char> moved(n, 0);
  auto live = w.lanes;
  for (std::size_t si = 0; si < w.lanes.size(); ++si) {
    const auto order = w.lanes[si];
    for (const auto idx : order) {
      if (moved[idx]) continue;
      auto& lane = live[si];
      const auto p = static_cast<std::size_t>(std::find(lane.begin(), lane.end(), idx) - lane.begin());
      auto& v = w.vehicles[idx];
      const auto& seg = net.segments()[si];
      auto d = directives[idx];
      if (p > 0) {
        const auto& ahead = w.vehicles[lane[p - 1]];
        d.max_position = ahead.position - kVehicleLength;
        d.max_position_speed = ahead.speed;
      } else if (const auto next = v.next_segment()) {
        const auto& next_lane = live[net.index_of(*next)];
        if (!next_lane.empty()) {
          const auto& tail = w.vehicles[next_lane.back()];
          d.max_position = seg.length + tail.position - kVehicleLength;
          d.max_position_speed = tail.speed;
        }
      }
      const auto old_segment = v.segment();
      v = advance(std::move(v), d, dt, t, net, w.idm);
      moved[idx] = 1;
      if (v.exited) {
        lane.erase(lane.begin() + static_cast<long>(p));
      } else if (v.segment() != old_segment) {
        lane.erase(lane.begin() + static_cast<long>(p));
        live[net.index_of(v.segment())].push_back(idx);
      }
    }
  }

  // Waiting metrics are credited to the step's start time.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = w.vehicles[i];
    std::optional<std::size_t> zone_idx;
    if (!v.exited) {
      if (const auto z = zone_at(net, net.segment(v.segment()), v.position)) zone_idx = net.index_of(*z);
    }
    w.metrics.record(v.id, zone_idx, v.accumulated_wait - before[i].accumulated_wait, t);
  }

  w.time = t + dt;
  for (auto& v : w.vehicles) {
    if (!v.exited && !v.stop_line_arrival && at_stop_line(net, v)) v.stop_line_arrival = w.time;
  }
  const auto exited_count = std::count_if(w.vehicles.begin(), w.vehicles.end(), [](const auto& v) { return v.exited; });
  if (exited_count > 0) {
    for (const auto& v : w.vehicles) {
      if (v.exited) out.exited.push_back(v.id);
    }
    std::erase_if(w.vehicles, [](const VehicleState& v) { return v.exited; });
    w.exited += static_cast<std::uint64_t>(exited_count);
  }
  w.reindex();

  // (4) occupancy, (5) conflicts
  auto occupancy = compute_core_occupancy(w);
  for (std::size_t i = 0; i < occupancy.size(); ++i) {
    const auto id = net.intersections()[i].id;
    auto events = detect_conflicts(w.core_occupancy[i], occupancy[i], w.conflict_matrices[i], id, w.time);
    for (const auto& occ : occupancy[i]) {
      const bool is_new = std::none_of(w.core_occupancy[i].begin(), w.core_occupancy[i].end(),
                                       [&](const CoreOccupant& o) { return o.vehicle == occ.vehicle; });
      if (is_new) {
        w.last_core_entry[i][static_cast<std::size_t>(side_index(occ.movement.from) * 4 +
                                                      side_index(occ.movement.to))] = w.time;
      }
    }
    for (auto& e : events) {
      w.metrics.record_conflict(e);
      out.conflicts.push_back(e);
    }
  }
  w.core_occupancy = std::move(occupancy);

  // (6) per-intersection samples once per simulated second
  if (std::fmod(w.time, 1.0) == 0.0) {
    for (std::size_t i = 0; i < net.intersections().size(); ++i) {
      const auto& node = net.intersections()[i];
      if (node.is_boundary()) continue;
      IntersectionSample s;
      s.time = w.time;
      const auto census = zone_census(w, node.id);
      s.vehicles = census.vehicles;
      s.rv_share = census.vehicles == 0 ? 0.0 : static_cast<double>(census.rvs) / census.vehicles;
      for (const auto side : kAllDirections) {
        if (!node.has_side(side)) continue;
        s.queue[static_cast<std::size_t>(side_index(side))] = queue_length(w, node.id, side);
        s.avg_wait[static_cast<std::size_t>(side_index(side))] = avg_wait(w, node.id, side);
      }
      w.metrics.record_sample(i, s);
    }
  }
  return out;
}

TraceWriter::TraceWriter(std::ostream& out) : out_(&out) {
  *out_ << "# mixtraffic-trace v" << kSchemaVersion << "\n";
  *out_ << "t,vehicle_id,segment_id,pos,speed,class\n";
}

void TraceWriter::write(const WorldState& world) {
  for (const auto& v : world.vehicles) {
    *out_ << world.time << ',' << to_int(v.id) << ',' << to_int(v.segment()) << ',' << std::setprecision(10)
          << v.position << ',' << v.speed << ',' << (v.is_rv() ? "RV" : "HV") << '\n';
  }
}

}  // namespace mixtraffic
