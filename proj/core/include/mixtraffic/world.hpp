#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <unordered_set>
#include <vector>

#include "mixtraffic/conflict.hpp"
#include "mixtraffic/netmodel.hpp"
#include "mixtraffic/random.hpp"
#include "mixtraffic/traffic.hpp"

namespace mixtraffic {

struct CoreOccupant {
  VehicleId vehicle{};
  Movement movement;
  friend bool operator==(const CoreOccupant&, const CoreOccupant&) = default;
};

struct ConflictEvent {
  double time = 0.0;
  IntersectionId intersection{};
  VehicleId first{};   // lower id of the pair
  VehicleId second{};
  friend bool operator==(const ConflictEvent&, const ConflictEvent&) = default;
};

struct MetricsWindow {
  double start = 500.0;
  double end = 1500.0;
  bool contains(double t) const { return t >= start && t < end; }
};

struct IntersectionSample {
  double time = 0.0;
  double rv_share = 0.0;  // NaN-free; 0 when the zones are empty
  std::uint32_t vehicles = 0;
  std::array<std::uint32_t, 4> queue{};  // per side N, E, S, W
  std::array<double, 4> avg_wait{};
};

// Waiting-time bookkeeping. Only increments whose step starts inside the
// window are credited; a vehicle enters the denominator once it has been
// observed inside any control zone during the window.
class MetricsAccumulator {
 public:
  MetricsAccumulator() = default;
  MetricsAccumulator(const RoadNetwork& net, MetricsWindow window);

  // `zone_index` is the dense index of the intersection whose zone holds the
  // vehicle after the step, if any.
  void record(VehicleId vehicle, std::optional<std::size_t> zone_index, double wait_increment, double t);
  void record_conflict(const ConflictEvent& event);
  void record_sample(std::size_t intersection_index, const IntersectionSample& sample);

  const MetricsWindow& window() const { return window_; }
  double total_window_wait() const { return total_wait_; }
  std::uint64_t vehicles_counted() const { return counted_; }
  // Sum of window waits / vehicles counted; 0 when no vehicle was counted.
  double average_wait() const;
  double average_wait_at(std::size_t intersection_index) const;
  std::uint64_t conflicts_in_window() const { return conflicts_in_window_; }
  std::uint64_t conflicts_total() const { return conflicts_total_; }
  const std::vector<std::vector<IntersectionSample>>& samples() const { return samples_; }
  // Mean of an intersection's sampled RV share over samples inside the window.
  double mean_rv_share(std::size_t intersection_index) const;

 private:
  MetricsWindow window_;
  std::unordered_set<std::int64_t> seen_;
  double total_wait_ = 0.0;
  std::uint64_t counted_ = 0;
  std::vector<std::unordered_set<std::int64_t>> seen_at_;
  std::vector<double> wait_at_;
  std::uint64_t conflicts_in_window_ = 0;
  std::uint64_t conflicts_total_ = 0;
  std::vector<std::vector<IntersectionSample>> samples_;
};

struct WorldState {
  std::shared_ptr<const RoadNetwork> net;
  std::vector<VehicleState> vehicles;  // active vehicles, ascending id
  double time = 0.0;
  double dt = kStepSeconds;
  IdmParams idm;
  Rng rng;
  Spawner spawner;
  std::uint64_t exited = 0;
  std::uint64_t injected = 0;  // vehicles placed by scripts rather than spawned
  // Per intersection (dense index): vehicles inside the intersection core.
  std::vector<std::vector<CoreOccupant>> core_occupancy;
  std::vector<ConflictMatrix> conflict_matrices;
  // Per intersection: last time a vehicle entered the core on each movement
  // (slot from * 4 + to).
  std::vector<std::array<double, 16>> last_core_entry;
  MetricsAccumulator metrics;
  // Per segment (dense index): indices into `vehicles`, front-most first.
  std::vector<std::vector<std::size_t>> lanes;

  WorldState(std::shared_ptr<const RoadNetwork> network, DemandConfig demand, std::uint64_t seed,
             MetricsWindow window = {}, IdmParams params = {});

  const RoadNetwork& network() const { return *net; }
  const VehicleState* find(VehicleId id) const;
  VehicleState* find(VehicleId id);

  // Places a scripted vehicle (tests, traces). Keeps ids unique and indexes
  // current.
  VehicleId inject(VehicleState vehicle);
  void reindex();

  std::uint64_t spawned_total() const { return spawner.spawned_total() + injected; }
};

// Movement a vehicle makes at the intersection whose core or zone it is in,
// when it is on an approach (or just past it). nullopt at route ends.
std::optional<std::pair<IntersectionId, Movement>> movement_at_head(const RoadNetwork& net,
                                                                     const VehicleState& v);
std::optional<std::pair<IntersectionId, Movement>> movement_at_tail(const RoadNetwork& net,
                                                                     const VehicleState& v);

// Core occupancy computed from vehicle positions alone.
std::vector<std::vector<CoreOccupant>> compute_core_occupancy(const WorldState& world);

// Stopped vehicles (speed < kStopSpeed) on the approach from `side`, inside the
// control zone. Throws std::invalid_argument when the side has no approach.
std::uint32_t queue_length(const WorldState& world, IntersectionId at, Direction side);

// Mean zone_wait of vehicles on that approach inside the control zone; 0 when empty.
double avg_wait(const WorldState& world, IntersectionId at, Direction side);

// Number of vehicles on that approach inside the control zone.
std::uint32_t approach_count(const WorldState& world, IntersectionId at, Direction side);

// True when a vehicle that arrived from `side` is inside the core.
bool approach_in_core(const WorldState& world, IntersectionId at, Direction side);

struct ZoneCensus {
  std::uint32_t vehicles = 0;
  std::uint32_t rvs = 0;
};
// Vehicles (and RVs among them) within the intersection's control zone.
ZoneCensus zone_census(const WorldState& world, IntersectionId at);

// The front-most vehicle on `segment` that has not crossed its stop line.
std::optional<std::size_t> queue_leader(const WorldState& world, SegmentId segment);

}  // namespace mixtraffic
