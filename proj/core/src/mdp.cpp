#include "mixtraffic/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mixtraffic {

void RewardConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("reward.alpha must be >= 0");
  if (!(p_target >= 0.0 && p_target <= 1.0)) throw std::invalid_argument("reward.p_target must lie in [0, 1]");
}

DirectionFeatures direction_features(const WorldState& world, IntersectionId at, Direction side) {
  DirectionFeatures f;
  f.queue = std::min(1.0, queue_length(world, at, side) / kQueueCapacity);
  f.wait = std::min(1.0, avg_wait(world, at, side) / kWaitCap);
  f.occupancy = approach_in_core(world, at, side) ? 1.0 : 0.0;
  return f;
}

RouteContext route_context(const WorldState& world, const VehicleState& rv) {
  const auto& net = world.network();
  const auto& seg = net.segment(rv.segment());
  const auto zone = zone_at(net, seg, rv.position);
  if (!zone) {
    throw ObservationError("vehicle " + std::to_string(to_int(rv.id)) + " is not inside any control zone");
  }
  RouteContext ctx;
  ctx.current = *zone;
  std::optional<IntersectionId> next_head;
  if (*zone == seg.to) {
    ctx.approach = seg.arrival_side;
    if (const auto next = rv.next_segment()) next_head = net.segment(*next).to;
  } else {
    const auto prev = rv.previous_segment();
    ctx.approach = prev ? net.segment(*prev).arrival_side : seg.departure_side;
    next_head = seg.to;
  }
  if (next_head && !net.intersection(*next_head).is_boundary()) ctx.downstream = next_head;
  return ctx;
}

Observation build_observation(const WorldState& world, VehicleId rv, const RewardConfig& cfg) {
  const auto* v = world.find(rv);
  if (!v) throw ObservationError("vehicle " + std::to_string(to_int(rv)) + " is not in the world");
  const auto ctx = route_context(world, *v);
  const auto& net = world.network();

  Observation obs{};
  const auto& node = net.intersection(ctx.current);
  for (const auto side : kAllDirections) {
    if (!node.has_side(side)) continue;
    const auto f = direction_features(world, ctx.current, side);
    const auto base = static_cast<std::size_t>(3 * side_index(side));
    obs[base] = f.queue;
    obs[base + 1] = f.wait;
    obs[base + 2] = f.occupancy;
  }
  if (ctx.downstream) {
    const auto& down = net.intersection(*ctx.downstream);
    double q = 0.0, w = 0.0, o = 0.0;
    for (const auto side : kAllDirections) {
      if (!down.has_side(side)) continue;
      const auto f = direction_features(world, down.id, side);
      q += f.queue;
      w += f.wait;
      o += f.occupancy;
    }
    const auto n = static_cast<double>(down.approaches.size());
    obs[12] = q / n;
    obs[13] = w / n;
    obs[14] = o / n;
    obs[15] = rv_share_downstream(world, down.id, cfg.p_target);
  }
  return obs;
}

RewardTerms compute_reward(Action action, double w_d, bool conflict_occurred, double p_current,
                           const RewardConfig& cfg) {
  RewardTerms r;
  r.local = action == Action::Go ? w_d : -w_d;
  r.conflict = conflict_occurred ? -1.0 : 0.0;
  r.neighbor = action == Action::Go ? std::max(0.0, cfg.p_target - p_current) : 0.0;
  r.total = r.local + r.conflict + cfg.alpha * r.neighbor;
  return r;
}

double rv_share_downstream(const WorldState& world, IntersectionId at, double p_target) {
  const auto census = zone_census(world, at);
  if (census.vehicles == 0) return p_target;
  return static_cast<double>(census.rvs) / static_cast<double>(census.vehicles);
}

std::vector<DecisionPoint> decision_points(const WorldState& world) {
  const auto& net = world.network();
  std::vector<DecisionPoint> points;
  for (const auto& node : net.intersections()) {
    if (node.is_boundary()) continue;
    for (const auto sid : node.approaches) {
      const auto idx = queue_leader(world, sid);
      if (!idx) continue;
      const auto& v = world.vehicles[*idx];
      if (!v.is_rv()) continue;
      const auto& seg = net.segment(sid);
      if (v.position < seg.length - net.zone_radius()) continue;
      if (world.time - v.last_decision_time < kDecisionInterval - 1e-9) continue;
      points.push_back({v.id, node.id});
    }
  }
  std::sort(points.begin(), points.end(),
            [](const DecisionPoint& a, const DecisionPoint& b) { return to_int(a.rv) < to_int(b.rv); });
  return points;
}

Environment::Environment(EnvConfig config) : config_(std::move(config)) {
  if (!config_.net) throw std::invalid_argument("environment needs a network");
  config_.reward.validate();
  config_.demand.validate(*config_.net);
  if (!(config_.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
}

std::vector<ObservedDecision> Environment::reset(std::uint64_t seed) {
  world_.emplace(config_.net, config_.demand, seed, config_.window, config_.idm);
  open_.clear();
  done_ = false;
  return refresh_decisions();
}

const std::vector<ObservedDecision>& Environment::refresh_decisions() {
  pending_.clear();
  for (const auto& p : decision_points(*world_)) {
    pending_.push_back({p, build_observation(*world_, p.rv, config_.reward)});
  }
  return pending_;
}

RvOutcome Environment::finalize(VehicleId rv, const OpenDecision& open, bool done, bool truncated,
                                std::optional<Observation> next) const {
  RvOutcome out;
  out.rv = rv;
  out.observation = open.observation;
  out.action = open.action;
  out.reward = compute_reward(open.action, open.w_d, open.conflict, open.p_current, config_.reward);
  out.done = done;
  out.truncated = truncated;
  out.next_observation = next;
  return out;
}

EnvStep Environment::step(const CommandMap& actions) {
  if (!world_) throw std::logic_error("Environment::step before reset");
  if (done_) throw std::logic_error("Environment::step after the episode ended");
  for (const auto& p : pending_) {
    if (!actions.contains(p.point.rv)) {
      throw CommandError("missing action for RV " + std::to_string(to_int(p.point.rv)));
    }
  }
  if (actions.size() != pending_.size()) {
    for (const auto& [id, _] : actions) {
      const bool known = std::any_of(pending_.begin(), pending_.end(),
                                     [&](const ObservedDecision& d) { return d.point.rv == id; });
      if (!known) throw CommandError("action for RV " + std::to_string(to_int(id)) + " at no decision point");
    }
  }

  EnvStep result;
  auto& world = *world_;
  for (const auto& p : pending_) {
    const auto action = actions.at(p.point.rv);
    const auto* v = world.find(p.point.rv);
    const auto ctx = route_context(world, *v);
    OpenDecision open;
    open.observation = p.observation;
    open.action = action;
    open.w_d = avg_wait(world, ctx.current, ctx.approach);
    open.p_current = ctx.downstream ? rv_share_downstream(world, *ctx.downstream, config_.reward.p_target)
                                    : config_.reward.p_target;
    if (const auto it = open_.find(p.point.rv); it != open_.end()) {
      result.outcomes.push_back(finalize(p.point.rv, it->second, false, false, p.observation));
    }
    open_[p.point.rv] = open;
  }

  const auto steps = static_cast<int>(std::lround(kDecisionInterval / world.dt));
  for (int k = 0; k < steps; ++k) {
    const auto outcome = mixtraffic::step(world, k == 0 ? actions : CommandMap{}, config_.controllers);
    if (observer_) observer_(world);
    for (const auto& e : outcome.conflicts) {
      for (const auto id : {e.first, e.second}) {
        if (const auto it = open_.find(id); it != open_.end()) it->second.conflict = true;
      }
      result.conflicts.push_back(e);
    }
    for (const auto id : outcome.exited) {
      if (const auto it = open_.find(id); it != open_.end()) {
        result.outcomes.push_back(finalize(id, it->second, true, false, std::nullopt));
        open_.erase(it);
      }
    }
  }

  if (world.time >= config_.horizon - 1e-9) {
    done_ = true;
    for (const auto& [id, open] : open_) result.outcomes.push_back(finalize(id, open, true, true, std::nullopt));
    open_.clear();
    pending_.clear();
  } else {
    refresh_decisions();
    result.decisions = pending_;
  }
  result.done = done_;
  return result;
}

}  // namespace mixtraffic
