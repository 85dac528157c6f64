#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "mixtraffic/action.hpp"
#include "mixtraffic/controllers.hpp"
#include "mixtraffic/simcore.hpp"
#include "mixtraffic/world.hpp"

namespace mixtraffic {

inline constexpr std::size_t kObservationSize = 16;
inline constexpr double kQueueCapacity = 4.0;  // floor(30 m / 7.5 m)
inline constexpr double kWaitCap = 60.0;       // s
inline constexpr double kDecisionInterval = 1.0;

// Fixed-length policy input: four (q, w, o) blocks in N, E, S, W order
// followed by the downstream summary (mean q, mean w, mean o, RV share).
using Observation = std::array<double, kObservationSize>;

struct DirectionFeatures {
  double queue = 0.0;      // normalized by kQueueCapacity, clamped to [0, 1]
  double wait = 0.0;       // normalized by kWaitCap, clamped to [0, 1]
  double occupancy = 0.0;  // 1 iff a vehicle from this approach is in the core
};

struct RewardConfig {
  double alpha = 1.0;
  double p_target = 0.6;
  void validate() const;
};

struct RewardTerms {
  double local = 0.0;
  double conflict = 0.0;
  double neighbor = 0.0;
  double total = 0.0;
};

class ObservationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

DirectionFeatures direction_features(const WorldState& world, IntersectionId at, Direction side);

// Intersection whose zone the vehicle occupies and the next intersection on
// its route after that one (nullopt when that is a boundary node or the route
// ends).
struct RouteContext {
  IntersectionId current{};
  Direction approach = Direction::North;
  std::optional<IntersectionId> downstream;
};
RouteContext route_context(const WorldState& world, const VehicleState& rv);

// Throws ObservationError when the vehicle is absent or outside every zone.
Observation build_observation(const WorldState& world, VehicleId rv, const RewardConfig& cfg);

RewardTerms compute_reward(Action action, double w_d, bool conflict_occurred, double p_current,
                           const RewardConfig& cfg);

// RV share among vehicles in the intersection's control zone; p_target when
// the zone is empty (or the node is a boundary).
double rv_share_downstream(const WorldState& world, IntersectionId at, double p_target);

struct DecisionPoint {
  VehicleId rv{};
  IntersectionId intersection{};
};

// Queue-leading RVs inside a zone, before their stop line, whose last
// decision is at least kDecisionInterval old. Ordered by vehicle id.
std::vector<DecisionPoint> decision_points(const WorldState& world);

struct EnvConfig {
  std::shared_ptr<const RoadNetwork> net;
  DemandConfig demand;
  RewardConfig reward;
  ControllerSet controllers;
  IdmParams idm;
  double horizon = 1500.0;
  MetricsWindow window;
};

struct ObservedDecision {
  DecisionPoint point;
  Observation observation{};
};

// Reward for one decision, finalized when the RV next decides, leaves the
// network or the episode ends.
struct RvOutcome {
  VehicleId rv{};
  Observation observation{};
  Action action = Action::Stop;
  RewardTerms reward;
  bool done = false;       // RV left the network, or the episode ended
  bool truncated = false;  // ended by the horizon rather than by leaving
  std::optional<Observation> next_observation;
};

struct EnvStep {
  std::vector<RvOutcome> outcomes;
  std::vector<ObservedDecision> decisions;
  std::vector<ConflictEvent> conflicts;
  bool done = false;
};

// Episode API over the simulator. Actions are supplied for exactly the current
// decision points; each step spans one decision interval (two dynamics steps).
class Environment {
 public:
  explicit Environment(EnvConfig config);

  std::vector<ObservedDecision> reset(std::uint64_t seed);
  EnvStep step(const CommandMap& actions);

  const WorldState& world() const { return *world_; }
  WorldState& mutable_world() { return *world_; }
  const EnvConfig& config() const { return config_; }
  bool done() const { return done_; }
  const std::vector<ObservedDecision>& pending() const { return pending_; }
  // Recomputes decision points, e.g. after scripted edits to the world.
  const std::vector<ObservedDecision>& refresh_decisions();
  // Called after every dynamics step (two per decision interval).
  void set_observer(std::function<void(const WorldState&)> observer) { observer_ = std::move(observer); }

 private:
  struct OpenDecision {
    Observation observation{};
    Action action = Action::Stop;
    double w_d = 0.0;
    double p_current = 0.0;
    bool conflict = false;
  };
  RvOutcome finalize(VehicleId rv, const OpenDecision& open, bool done, bool truncated,
                     std::optional<Observation> next) const;

  EnvConfig config_;
  std::optional<WorldState> world_;
  std::map<VehicleId, OpenDecision> open_;
  std::vector<ObservedDecision> pending_;
  bool done_ = false;
  std::function<void(const WorldState&)> observer_;
};

}  // namespace mixtraffic
