#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "mixtraffic/conflict.hpp"
#include "mixtraffic/controllers.hpp"
#include "mixtraffic/simcore.hpp"
#include "support/scenario.hpp"

namespace mt = mixtraffic;
using namespace mixtraffic::testing;
using D = mt::Direction;

namespace {

mt::Movement mv(D from, D to) { return {from, to}; }

// Hand-enumerated row for the through movement from the north, right-hand
// traffic: it crosses both east-west throughs, the left from the south and
// the left from the west, and merges with the east left and the west right.
const std::set<std::pair<int, int>> kNorthThroughConflicts = {
    {1, 2}, {1, 3},  // E->S, E->W
    {2, 3},          // S->W
    {3, 0}, {3, 1}, {3, 2},  // W->N, W->E, W->S
};

std::uint32_t brute_queue(const mt::WorldState& w, mt::SegmentId s) {
  const auto& seg = w.network().segment(s);
  std::uint32_t n = 0;
  for (const auto& v : w.vehicles) {
    if (v.segment() == s && v.position >= seg.length - w.network().zone_radius() && v.speed < mt::kStopSpeed) ++n;
  }
  return n;
}

double brute_avg_wait(const mt::WorldState& w, mt::SegmentId s) {
  const auto& seg = w.network().segment(s);
  double sum = 0.0;
  int n = 0;
  for (const auto& v : w.vehicles) {
    if (v.segment() == s && v.position >= seg.length - w.network().zone_radius()) {
      sum += v.zone_wait;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

mt::CommandMap random_commands(const mt::WorldState& w, mt::Rng& rng) {
  mt::CommandMap cmds;
  for (const auto& p : mt::decision_points(w)) cmds[p.rv] = mt::random_rv_policy(rng);
  return cmds;
}

}  // namespace

TEST(ConflictMatrix, NorthThroughRowMatchesHandTable) {
  const auto cm = mt::ConflictMatrix::for_sides(std::bitset<4>("1111"));
  for (int f = 1; f < 4; ++f) {
    for (int t = 0; t < 4; ++t) {
      if (f == t) continue;
      const bool want = kNorthThroughConflicts.contains({f, t});
      EXPECT_EQ(cm.conflicts(mv(D::North, D::South), mv(D(f), D(t))), want) << f << "->" << t;
    }
  }
}

TEST(ConflictMatrix, SymmetricAndSameApproachExempt) {
  const auto cm = mt::ConflictMatrix::for_sides(std::bitset<4>("1111"));
  for (int a = 0; a < 16; ++a) {
    for (int b = 0; b < 16; ++b) {
      const auto ma = mv(D(a / 4), D(a % 4));
      const auto mb = mv(D(b / 4), D(b % 4));
      if (!cm.valid(ma) || !cm.valid(mb)) continue;
      EXPECT_EQ(cm.conflicts(ma, mb), cm.conflicts(mb, ma));
      if (ma.from == mb.from) EXPECT_FALSE(cm.conflicts(ma, mb));
    }
  }
  EXPECT_TRUE(cm.conflicts(mv(D::North, D::South), mv(D::South, D::West)));  // opposing left
  EXPECT_FALSE(cm.conflicts(mv(D::North, D::South), mv(D::South, D::North)));  // opposing through
}

TEST(ConflictMatrix, ThreeWayOmitsMissingSide) {
  const auto cm = mt::ConflictMatrix::for_sides(std::bitset<4>("0111"));  // no west
  EXPECT_FALSE(cm.valid(mv(D::West, D::East)));
  EXPECT_FALSE(cm.valid(mv(D::North, D::West)));
  EXPECT_TRUE(cm.valid(mv(D::North, D::South)));
}

TEST(DetectConflicts, SingleVehicleNoEvent) {
  const auto cm = mt::ConflictMatrix::for_sides(std::bitset<4>("1111"));
  EXPECT_TRUE(mt::detect_conflicts({}, {{mt::VehicleId{1}, mv(D::North, D::South)}}, cm, {}, 0).empty());
}

TEST(DetectConflicts, SameApproachNoEvent) {
  const auto cm = mt::ConflictMatrix::for_sides(std::bitset<4>("1111"));
  const std::vector<mt::CoreOccupant> cur{{mt::VehicleId{1}, mv(D::North, D::South)},
                                          {mt::VehicleId{2}, mv(D::North, D::East)}};
  EXPECT_TRUE(mt::detect_conflicts({}, cur, cm, {}, 0).empty());
}

TEST(DetectConflicts, CrossingThroughsFireOnceAndSymmetrically) {
  const auto cm = mt::ConflictMatrix::for_sides(std::bitset<4>("1111"));
  const mt::CoreOccupant a{mt::VehicleId{4}, mv(D::South, D::North)};
  const mt::CoreOccupant b{mt::VehicleId{2}, mv(D::West, D::East)};
  const auto ab = mt::detect_conflicts({}, {a, b}, cm, mt::IntersectionId{7}, 3.0);
  const auto ba = mt::detect_conflicts({}, {b, a}, cm, mt::IntersectionId{7}, 3.0);
  ASSERT_EQ(ab.size(), 1u);
  EXPECT_EQ(ab, ba);
  EXPECT_EQ(ab[0].first, mt::VehicleId{2});
  EXPECT_EQ(ab[0].second, mt::VehicleId{4});
  // Both already present: no re-fire.
  EXPECT_TRUE(mt::detect_conflicts({a, b}, {a, b}, cm, {}, 3.5).empty());
  // One new entrant against a present occupant fires.
  EXPECT_EQ(mt::detect_conflicts({a}, {a, b}, cm, {}, 3.5).size(), 1u);
}

TEST(Step, EmptyWorldAdvancesTimeOnly) {
  auto w = empty_world(grid(2, 2));
  const auto ctl = mt::ControllerSet::rv_controlled(w.network());
  for (int k = 0; k < 10; ++k) {
    const auto out = mt::step(w, {}, ctl);
    EXPECT_TRUE(out.spawned.empty() && out.exited.empty() && out.conflicts.empty());
  }
  EXPECT_EQ(w.time, 5.0);
  EXPECT_TRUE(w.vehicles.empty());
}

TEST(Step, HeldRvAccruesFiveSeconds) {
  auto w = empty_world(grid(1, 1));
  const auto& net = w.network();
  const auto c = internal(net, 0);
  const auto in = approach(net, c, D::North);
  const auto id = w.inject(vehicle({in, exit_to(net, c, D::South)}, mt::stop_line_of(net.segment(in)), 0.0,
                                   mt::VehicleClass::RV));
  const auto ctl = mt::ControllerSet::rv_controlled(net);
  for (int k = 0; k < 10; ++k) mt::step(w, {{id, mt::Action::Stop}}, ctl);
  EXPECT_EQ(w.find(id)->accumulated_wait, 5.0);
}

TEST(Step, SimultaneousCrossingEntriesGiveOneEvent) {
  auto w = empty_world(grid(1, 1));
  const auto& net = w.network();
  const auto c = internal(net, 0);
  const auto n_in = approach(net, c, D::North);
  const auto e_in = approach(net, c, D::East);
  const double line = mt::stop_line_of(net.segment(n_in));
  const auto a = w.inject(vehicle({n_in, exit_to(net, c, D::South)}, line - 1.0, 6.0, mt::VehicleClass::RV));
  const auto b = w.inject(vehicle({e_in, exit_to(net, c, D::West)}, line - 1.0, 6.0, mt::VehicleClass::RV));
  const auto ctl = mt::ControllerSet::rv_controlled(net);
  std::vector<mt::ConflictEvent> all;
  mt::CommandMap go{{a, mt::Action::Go}, {b, mt::Action::Go}};
  for (int k = 0; k < 20; ++k) {
    auto out = mt::step(w, k == 0 ? go : mt::CommandMap{}, ctl);
    all.insert(all.end(), out.conflicts.begin(), out.conflicts.end());
  }
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].first, std::min(a, b, [](auto x, auto y) { return mt::to_int(x) < mt::to_int(y); }));
  EXPECT_EQ(all[0].second, std::max(a, b, [](auto x, auto y) { return mt::to_int(x) < mt::to_int(y); }));
  EXPECT_EQ(all[0].intersection, c);
}

TEST(Step, RejectsBadCommands) {
  auto w = empty_world(grid(1, 1));
  const auto& net = w.network();
  const auto c = internal(net, 0);
  const auto hv = w.inject(vehicle({approach(net, c, D::North), exit_to(net, c, D::South)}, 50.0, 5.0));
  const auto ctl = mt::ControllerSet::rv_controlled(net);
  EXPECT_THROW(mt::step(w, {{hv, mt::Action::Go}}, ctl), mt::CommandError);
  EXPECT_THROW(mt::step(w, {{mt::VehicleId{123456}, mt::Action::Go}}, ctl), mt::CommandError);
}

TEST(QueueLength, StoppedVehiclesOnly) {
  auto w = empty_world(grid(1, 1));
  const auto& net = w.network();
  const auto c = internal(net, 0);
  const auto in = approach(net, c, D::North);
  const auto out = exit_to(net, c, D::South);
  EXPECT_EQ(mt::queue_length(w, c, D::North), 0u);
  EXPECT_EQ(mt::avg_wait(w, c, D::North), 0.0);
  const double line = mt::stop_line_of(net.segment(in));
  for (int k = 0; k < 3; ++k) w.inject(vehicle({in, out}, line - 6.0 * k, 0.0));
  w.inject(vehicle({in, out}, line - 6.0 * 3, 2.0));
  EXPECT_EQ(mt::queue_length(w, c, D::North), 3u);
  EXPECT_EQ(mt::approach_count(w, c, D::North), 4u);
}

TEST(AvgWait, ArithmeticMean) {
  auto w = empty_world(grid(1, 1));
  const auto& net = w.network();
  const auto c = internal(net, 0);
  const auto in = approach(net, c, D::East);
  auto v1 = vehicle({in, exit_to(net, c, D::West)}, 185.0, 0.0);
  v1.zone_wait = 4.0;
  auto v2 = vehicle({in, exit_to(net, c, D::West)}, 178.0, 0.0);
  v2.zone_wait = 6.0;
  w.inject(v1);
  w.inject(v2);
  EXPECT_EQ(mt::avg_wait(w, c, D::East), 5.0);
  EXPECT_THROW(mt::queue_length(empty_world(grid(1, 1)), mt::IntersectionId{999}, D::North), std::exception);
}

TEST(WorldProperties, RandomizedRunInvariants) {
  const auto net = grid(2, 2);
  mt::WorldState w(net, mt::DemandConfig::uniform(*net, 0.12, 0.6), 77);
  const auto ctl = mt::ControllerSet::rv_controlled(*net);
  mt::Rng rng(8);
  std::map<std::int64_t, double> wait_seen;
  for (int k = 0; k < 2000; ++k) {
    mt::step(w, random_commands(w, rng), ctl);
    ASSERT_EQ(w.core_occupancy, mt::compute_core_occupancy(w)) << "step " << k;
    for (const auto& node : net->intersections()) {
      if (node.is_boundary()) continue;
      for (const auto side : mt::kAllDirections) {
        const auto s = *node.approach_by_side[mt::side_index(side)];
        ASSERT_EQ(mt::queue_length(w, node.id, side), brute_queue(w, s));
        ASSERT_DOUBLE_EQ(mt::avg_wait(w, node.id, side), brute_avg_wait(w, s));
      }
    }
    for (const auto& v : w.vehicles) {
      auto [it, fresh] = wait_seen.emplace(mt::to_int(v.id), v.accumulated_wait);
      ASSERT_GE(v.accumulated_wait, it->second);
      it->second = v.accumulated_wait;
      if (v.is_rv() == false) ASSERT_EQ(v.pending_action, mt::PendingAction::None);
    }
  }
}

TEST(WorldProperties, DeterministicGivenSeed) {
  const auto net = grid(2, 2);
  auto run = [&](std::uint64_t seed) {
    mt::WorldState w(net, mt::DemandConfig::uniform(*net, 0.1, 0.6), seed);
    const auto ctl = mt::ControllerSet::all_way_stop(*net);
    std::vector<double> trace;
    for (int k = 0; k < 1500; ++k) {
      mt::step(w, {}, ctl);
      for (const auto& v : w.vehicles) {
        trace.push_back(v.position);
        trace.push_back(v.speed);
      }
    }
    trace.push_back(w.metrics.average_wait());
    return trace;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Metrics, WindowDiscipline) {
  const auto net = grid(1, 1);
  mt::MetricsAccumulator m(*net, {500.0, 1500.0});
  m.record(mt::VehicleId{1}, 0, 0.5, 499.5);
  EXPECT_EQ(m.vehicles_counted(), 0u);
  m.record(mt::VehicleId{1}, 0, 0.5, 500.0);
  m.record(mt::VehicleId{2}, 0, 0.0, 700.0);
  m.record(mt::VehicleId{2}, 0, 0.5, 1500.0);
  EXPECT_EQ(m.vehicles_counted(), 2u);
  EXPECT_EQ(m.total_window_wait(), 0.5);
  EXPECT_EQ(m.average_wait(), 0.25);
}

TEST(Trace, HeaderAndRecords) {
  auto w = empty_world(grid(1, 1));
  const auto& net = w.network();
  const auto c = internal(net, 0);
  w.inject(vehicle({approach(net, c, D::North), exit_to(net, c, D::South)}, 20.0, 5.0, mt::VehicleClass::RV));
  std::ostringstream os;
  mt::TraceWriter tw(os);
  tw.write(w);
  const auto text = os.str();
  EXPECT_EQ(text.rfind("# mixtraffic-trace v1\nt,vehicle_id,segment_id,pos,speed,class\n", 0), 0u);
  EXPECT_NE(text.find(",RV\n"), std::string::npos);
}
