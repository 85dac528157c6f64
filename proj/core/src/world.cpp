#include "mixtraffic/world.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mixtraffic {

MetricsAccumulator::MetricsAccumulator(const RoadNetwork& net, MetricsWindow window)
    : window_(window),
      seen_at_(net.intersections().size()),
      wait_at_(net.intersections().size(), 0.0),
      samples_(net.intersections().size()) {
  if (!(window.start >= 0.0 && window.end > window.start)) {
    throw std::invalid_argument("metric window must satisfy 0 <= start < end");
  }
}

void MetricsAccumulator::record(VehicleId vehicle, std::optional<std::size_t> zone_index, double wait_increment,
                                double t) {
  if (!window_.contains(t) || !zone_index) return;
  if (seen_.insert(to_int(vehicle)).second) ++counted_;
  total_wait_ += wait_increment;
  seen_at_.at(*zone_index).insert(to_int(vehicle));
  wait_at_[*zone_index] += wait_increment;
}

void MetricsAccumulator::record_conflict(const ConflictEvent& event) {
  ++conflicts_total_;
  if (window_.contains(event.time)) ++conflicts_in_window_;
}

void MetricsAccumulator::record_sample(std::size_t intersection_index, const IntersectionSample& sample) {
  samples_.at(intersection_index).push_back(sample);
}

double MetricsAccumulator::average_wait() const {
  return counted_ == 0 ? 0.0 : total_wait_ / static_cast<double>(counted_);
}

double MetricsAccumulator::average_wait_at(std::size_t intersection_index) const {
  const auto n = seen_at_.at(intersection_index).size();
  return n == 0 ? 0.0 : wait_at_[intersection_index] / static_cast<double>(n);
}

double MetricsAccumulator::mean_rv_share(std::size_t intersection_index) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples_.at(intersection_index)) {
    if (!window_.contains(s.time) || s.vehicles == 0) continue;
    sum += s.rv_share;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

WorldState::WorldState(std::shared_ptr<const RoadNetwork> network, DemandConfig demand, std::uint64_t seed,
                       MetricsWindow window, IdmParams params)
    : net(std::move(network)),
      idm(params),
      rng(seed),
      spawner(*net, std::move(demand)),
      core_occupancy(net->intersections().size()),
      last_core_entry(net->intersections().size()),
      metrics(*net, window),
      lanes(net->segments().size()) {
  idm.validate();
  for (const auto& node : net->intersections()) conflict_matrices.push_back(ConflictMatrix::for_intersection(node));
  for (auto& slots : last_core_entry) slots.fill(-std::numeric_limits<double>::infinity());
}

const VehicleState* WorldState::find(VehicleId id) const {
  const auto it = std::lower_bound(vehicles.begin(), vehicles.end(), id,
                                   [](const VehicleState& v, VehicleId x) { return to_int(v.id) < to_int(x); });
  return it != vehicles.end() && it->id == id ? &*it : nullptr;
}

VehicleState* WorldState::find(VehicleId id) {
  return const_cast<VehicleState*>(static_cast<const WorldState&>(*this).find(id));
}

VehicleId WorldState::inject(VehicleState vehicle) {
  if (vehicle.route.empty()) throw std::invalid_argument("injected vehicle needs a route");
  for (const auto s : vehicle.route) (void)net->segment(s);
  // Scripted ids live above the spawner's range so both can coexist.
  vehicle.id = VehicleId{static_cast<std::int64_t>((1ULL << 40) + injected)};
  ++injected;
  vehicles.push_back(vehicle);
  reindex();
  return vehicle.id;
}

void WorldState::reindex() {
  std::sort(vehicles.begin(), vehicles.end(),
            [](const VehicleState& a, const VehicleState& b) { return to_int(a.id) < to_int(b.id); });
  for (auto& lane : lanes) lane.clear();
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    lanes[net->index_of(vehicles[i].segment())].push_back(i);
  }
  for (auto& lane : lanes) {
    std::sort(lane.begin(), lane.end(), [&](std::size_t a, std::size_t b) {
      if (vehicles[a].position != vehicles[b].position) return vehicles[a].position > vehicles[b].position;
      return to_int(vehicles[a].id) < to_int(vehicles[b].id);
    });
  }
}

std::optional<std::pair<IntersectionId, Movement>> movement_at_head(const RoadNetwork& net, const VehicleState& v) {
  const auto next = v.next_segment();
  if (!next) return std::nullopt;
  const auto& seg = net.segment(v.segment());
  return std::pair{seg.to, Movement{seg.arrival_side, net.segment(*next).departure_side}};
}

std::optional<std::pair<IntersectionId, Movement>> movement_at_tail(const RoadNetwork& net, const VehicleState& v) {
  const auto prev = v.previous_segment();
  if (!prev) return std::nullopt;
  const auto& seg = net.segment(v.segment());
  return std::pair{seg.from, Movement{net.segment(*prev).arrival_side, seg.departure_side}};
}

std::vector<std::vector<CoreOccupant>> compute_core_occupancy(const WorldState& world) {
  const auto& net = world.network();
  std::vector<std::vector<CoreOccupant>> occ(net.intersections().size());
  for (const auto& v : world.vehicles) {
    const auto& seg = net.segment(v.segment());
    std::optional<std::pair<IntersectionId, Movement>> where;
    if (v.position > stop_line_of(seg)) {
      where = movement_at_head(net, v);
    } else if (v.position <= kCoreRadius) {
      where = movement_at_tail(net, v);
    }
    if (where && !net.intersection(where->first).is_boundary()) {
      occ[net.index_of(where->first)].push_back({v.id, where->second});
    }
  }
  for (auto& list : occ) {
    std::sort(list.begin(), list.end(),
              [](const CoreOccupant& a, const CoreOccupant& b) { return to_int(a.vehicle) < to_int(b.vehicle); });
  }
  return occ;
}

namespace {

SegmentId approach_segment(const WorldState& world, IntersectionId at, Direction side) {
  const auto& node = world.network().intersection(at);
  const auto seg = node.approach_by_side[side_index(side)];
  if (!seg) {
    throw std::invalid_argument("intersection " + std::to_string(to_int(at)) + " has no approach from side " +
                                std::string(name_of(side)));
  }
  return *seg;
}

template <typename F>
void for_each_in_approach_zone(const WorldState& world, SegmentId sid, F&& f) {
  const auto& net = world.network();
  const auto& seg = net.segment(sid);
  const double zone_start = seg.length - net.zone_radius();
  for (const auto idx : world.lanes[net.index_of(sid)]) {
    const auto& v = world.vehicles[idx];
    if (v.position < zone_start) break;  // lane is ordered front-most first
    f(v);
  }
}

}  // namespace

std::uint32_t queue_length(const WorldState& world, IntersectionId at, Direction side) {
  std::uint32_t n = 0;
  for_each_in_approach_zone(world, approach_segment(world, at, side), [&](const VehicleState& v) {
    if (v.speed < kStopSpeed) ++n;
  });
  return n;
}

double avg_wait(const WorldState& world, IntersectionId at, Direction side) {
  double sum = 0.0;
  std::uint32_t n = 0;
  for_each_in_approach_zone(world, approach_segment(world, at, side), [&](const VehicleState& v) {
    sum += v.zone_wait;
    ++n;
  });
  return n == 0 ? 0.0 : sum / n;
}

std::uint32_t approach_count(const WorldState& world, IntersectionId at, Direction side) {
  std::uint32_t n = 0;
  for_each_in_approach_zone(world, approach_segment(world, at, side), [&](const VehicleState&) { ++n; });
  return n;
}

bool approach_in_core(const WorldState& world, IntersectionId at, Direction side) {
  const auto& occ = world.core_occupancy[world.network().index_of(at)];
  return std::any_of(occ.begin(), occ.end(), [&](const CoreOccupant& o) { return o.movement.from == side; });
}

ZoneCensus zone_census(const WorldState& world, IntersectionId at) {
  const auto& net = world.network();
  const auto& node = net.intersection(at);
  ZoneCensus census;
  if (node.is_boundary()) return census;
  auto count = [&](const VehicleState& v) {
    ++census.vehicles;
    if (v.is_rv()) ++census.rvs;
  };
  for (const auto sid : node.approaches) for_each_in_approach_zone(world, sid, count);
  for (const auto& exit : node.exit_by_side) {
    if (!exit) continue;
    const auto& lane = world.lanes[net.index_of(*exit)];
    for (auto it = lane.rbegin(); it != lane.rend(); ++it) {  // rear-most first
      const auto& v = world.vehicles[*it];
      if (v.position > net.zone_radius()) break;
      count(v);
    }
  }
  return census;
}

std::optional<std::size_t> queue_leader(const WorldState& world, SegmentId segment) {
  const auto& net = world.network();
  const double line = stop_line_of(net.segment(segment));
  for (const auto idx : world.lanes[net.index_of(segment)]) {
    if (world.vehicles[idx].position <= line) return idx;
  }
  return std::nullopt;
}

}  // namespace mixtraffic
