#include "mixtraffic/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mixtraffic {

void IdmParams::validate() const {
  if (!(desired_speed > 0 && max_accel > 0 && comfortable_decel > 0 && min_gap > 0 && headway > 0 &&
        accel_exponent > 0 && max_decel > 0)) {
    throw std::invalid_argument("IDM parameters must all be positive");
  }
}

double idm_accel(double v, std::optional<Leader> leader, const IdmParams& p) {
  const double free_term = std::pow(v / p.desired_speed, p.accel_exponent);
  double interaction = 0.0;
  if (leader) {
    if (!(leader->gap > 0.0)) {
      throw std::invalid_argument("idm_accel: gap must be positive, got " + std::to_string(leader->gap));
    }
    const double s_star = p.min_gap + v * p.headway +
                          v * (v - leader->speed) / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel));
    const double ratio = s_star / leader->gap;
    interaction = ratio * ratio;
  }
  const double a = p.max_accel * (1.0 - free_term - interaction);
  return std::clamp(a, -p.max_decel, p.max_accel);
}

std::optional<IntersectionId> zone_at(const RoadNetwork& net, const RoadSegment& seg, double position) {
  const double r = net.zone_radius();
  if (position >= seg.length - r && !net.intersection(seg.to).is_boundary()) return seg.to;
  if (position <= r && !net.intersection(seg.from).is_boundary()) return seg.from;
  return std::nullopt;
}

bool in_control_zone(const RoadNetwork& net, const RoadSegment& seg, double position) {
  return zone_at(net, seg, position).has_value();
}

VehicleState advance(VehicleState vehicle, const MotionDirective& command, double dt, double now,
                     const RoadNetwork& net, const IdmParams& params) {
  if (vehicle.exited) return vehicle;
  const RoadSegment* seg = &net.segment(vehicle.segment());
  const auto zone_before = zone_at(net, *seg, vehicle.position);

  IdmParams local = params;
  local.desired_speed = std::min(params.desired_speed, seg->speed_limit);

  double accel = 0.0;
  if (command.leader && !(command.leader->gap > 0.0)) {
    accel = -local.max_decel;
  } else {
    accel = idm_accel(vehicle.speed, command.leader, local);
  }
  const bool holding = command.kind == MotionDirective::Kind::HoldAt && vehicle.position <= command.stop_line;
  if (holding) {
    // The stop line acts as a stationary leader placed s0 beyond it, so the
    // standstill equilibrium sits exactly on the line.
    const Leader line{0.0, command.stop_line + local.min_gap - vehicle.position};
    accel = std::min(accel, idm_accel(vehicle.speed, line, local));
  }

  double v = std::clamp(vehicle.speed + accel * dt, 0.0, std::max(local.desired_speed, 0.0));
  double x = vehicle.position + v * dt;
  if (holding && x > command.stop_line) {
    x = command.stop_line;
    v = 0.0;
  }
  if (x > command.max_position) {
    x = std::max(vehicle.position, command.max_position);
    v = std::min(v, command.max_position_speed);
  }
  vehicle.speed = v;
  vehicle.position = x;

  while (vehicle.position > seg->length) {
    vehicle.position -= seg->length;
    ++vehicle.segment_index;
    vehicle.stop_line_arrival.reset();
    vehicle.pending_action = PendingAction::None;
    if (vehicle.segment_index >= vehicle.route.size()) {
      vehicle.exited = true;
      vehicle.segment_index = vehicle.route.size() - 1;
      vehicle.stationary_since.reset();
      vehicle.pending_action = PendingAction::None;
      return vehicle;
    }
    seg = &net.segment(vehicle.segment());
  }

  const auto zone_after = zone_at(net, *seg, vehicle.position);
  if (zone_after != zone_before) vehicle.zone_wait = 0.0;
  if (zone_after && vehicle.speed < kStopSpeed) {
    vehicle.accumulated_wait += dt;
    vehicle.zone_wait += dt;
    if (!vehicle.stationary_since) vehicle.stationary_since = now;
  } else {
    vehicle.stationary_since.reset();
  }
  return vehicle;
}

void DemandConfig::validate(const RoadNetwork& net) const {
  if (!(rv_penetration >= 0.0 && rv_penetration <= 1.0)) {
    throw std::invalid_argument("rv_penetration must lie in [0, 1]");
  }
  for (const auto& e : entries) {
    if (!(e.rate >= 0.0)) throw std::invalid_argument("arrival rates must be >= 0");
    if (!net.contains(e.intersection) || !net.intersection(e.intersection).is_boundary()) {
      throw std::invalid_argument("demand entry " + std::to_string(to_int(e.intersection)) +
                                  " is not a boundary intersection");
    }
  }
}

DemandConfig DemandConfig::uniform(const RoadNetwork& net, double rate, double rv_penetration,
                                   std::uint64_t seed) {
  DemandConfig d;
  for (const auto id : net.entries()) d.entries.push_back({id, rate});
  d.rv_penetration = rv_penetration;
  d.seed = seed;
  return d;
}

Spawner::Spawner(const RoadNetwork& net, DemandConfig demand) : net_(&net), demand_(std::move(demand)) {
  demand_.validate(net);
  for (const auto& e : demand_.entries) {
    Entry entry{e.intersection, e.rate, {}, {}};
    for (const auto exit : net.exits()) {
      if (exit == e.intersection) continue;
      auto path = net.shortest_path(e.intersection, exit);
      if (!path.empty()) entry.routes.push_back(std::move(path));
    }
    entries_.push_back(std::move(entry));
  }
}

std::vector<VehicleState> Spawner::spawn_step(Rng& rng, double t, double dt,
                                              const std::function<bool(SegmentId)>& blocked) {
  std::vector<VehicleState> out;
  for (auto& entry : entries_) {
    // One uniform per entry per step keeps the stream aligned across runs
    // that differ only in penetration or control.
    const double p = 1.0 - std::exp(-entry.rate * dt);
    if (rng.uniform() < p && !entry.routes.empty()) {
      const double u_class = rng.uniform();
      const auto route_idx = rng.below(entry.routes.size());
      entry.backlog.push_back({u_class < demand_.rv_penetration ? VehicleClass::RV : VehicleClass::HV,
                               entry.routes[route_idx], t});
    }
    if (entry.backlog.empty()) continue;
    const auto first = entry.backlog.front().route.front();
    if (blocked && blocked(first)) continue;
    auto pending = std::move(entry.backlog.front());
    entry.backlog.pop_front();
    VehicleState v;
    v.id = VehicleId{static_cast<std::int64_t>(next_id_++)};
    v.cls = pending.cls;
    v.route = std::move(pending.route);
    v.spawn_time = t;
    out.push_back(std::move(v));
  }
  return out;
}

std::size_t Spawner::backlog_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.backlog.size();
  return n;
}

}  // namespace mixtraffic
