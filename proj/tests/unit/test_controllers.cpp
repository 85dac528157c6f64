#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mixtraffic/controllers.hpp"
#include "mixtraffic/simcore.hpp"
#include "support/scenario.hpp"

namespace mt = mixtraffic;
using namespace mixtraffic::testing;
using D = mt::Direction;

namespace {

mt::SignalPlan four_way_plan() {
  const auto net = mt::generate_grid(1, 1, 200);
  return mt::SignalPlan::default_for(net.intersection(internal(net, 0)));
}

bool green(const std::array<mt::SignalColor, 4>& s, D d) {
  return s[static_cast<std::size_t>(mt::side_index(d))] == mt::SignalColor::Green;
}

struct Junction {
  mt::WorldState world = empty_world(grid(1, 1));
  mt::IntersectionId c = internal(world.network(), 0);

  mt::VehicleId waiting(D from, D to, double arrival) {
    const auto& net = world.network();
    const auto in = approach(net, c, from);
    auto v = vehicle({in, exit_to(net, c, to)}, mt::stop_line_of(net.segment(in)), 0.0);
    v.stop_line_arrival = arrival;
    return world.inject(v);
  }
  mt::StopDecision decide(mt::VehicleId id) {
    return mt::allway_stop_decision(world, *world.find(id), mt::GapAcceptanceParams{});
  }
};

}  // namespace

TEST(Signal, CycleArithmetic) {
  const auto plan = four_way_plan();
  EXPECT_EQ(plan.cycle_length(), 60.0);
  const auto s0 = mt::signal_state(plan, 0.0);
  EXPECT_TRUE(green(s0, D::North) && green(s0, D::South));
  EXPECT_FALSE(green(s0, D::East) || green(s0, D::West));
  const auto s45 = mt::signal_state(plan, 45.0);
  EXPECT_TRUE(green(s45, D::East) && green(s45, D::West));
  EXPECT_FALSE(green(s45, D::North) || green(s45, D::South));
  for (const auto d : mt::kAllDirections) EXPECT_FALSE(green(mt::signal_state(plan, 29.0), d));
  EXPECT_EQ(mt::signal_state(plan, 60.0), s0);
}

TEST(Signal, PeriodicityProperty) {
  const auto plan = four_way_plan();
  mt::Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double t = std::floor(rng.uniform() * 20000.0) * 0.5;
    EXPECT_EQ(mt::signal_state(plan, t), mt::signal_state(plan, t + plan.cycle_length()));
  }
}

TEST(Signal, ThreeWayServesEverySide) {
  const auto net = mt::load_network_file(MIXTRAFFIC_DATA_DIR "/net17.json");
  for (const auto& node : net.intersections()) {
    if (node.kind != mt::IntersectionKind::ThreeWay) continue;
    std::bitset<4> present;
    for (const auto d : mt::kAllDirections) present[mt::side_index(d)] = node.has_side(d);
    EXPECT_NO_THROW(mt::SignalPlan::default_for(node).validate(present));
  }
}

TEST(Signal, ValidationRejectsUnservedSide) {
  mt::SignalPlan plan;
  plan.phases = {{std::bitset<4>("0101"), 28.0, 2.0}};
  EXPECT_THROW(plan.validate(std::bitset<4>("1111")), std::invalid_argument);
  plan.phases = {{std::bitset<4>("1111"), 28.0, -1.0}};
  EXPECT_THROW(plan.validate(std::bitset<4>("1111")), std::invalid_argument);
}

TEST(AllWayStop, SoleVehicleProceedsAfterPause) {
  Junction j;
  j.world.time = 10.0;
  const auto id = j.waiting(D::North, D::South, 9.5);
  EXPECT_EQ(j.decide(id), mt::StopDecision::Hold);
  j.world.time = 10.5;
  EXPECT_EQ(j.decide(id), mt::StopDecision::Proceed);
}

TEST(AllWayStop, EarlierArrivalFirst) {
  Junction j;
  j.world.time = 12.0;
  const auto n = j.waiting(D::North, D::South, 10.5);
  const auto e = j.waiting(D::East, D::West, 10.0);
  EXPECT_EQ(j.decide(e), mt::StopDecision::Proceed);
  EXPECT_EQ(j.decide(n), mt::StopDecision::Hold);
}

TEST(AllWayStop, TieGoesToNorth) {
  Junction j;
  j.world.time = 12.0;
  const auto n = j.waiting(D::North, D::South, 10.0);
  const auto e = j.waiting(D::East, D::West, 10.0);
  EXPECT_EQ(j.decide(n), mt::StopDecision::Proceed);
  EXPECT_EQ(j.decide(e), mt::StopDecision::Hold);
}

TEST(AllWayStop, NonConflictingPairBothProceed) {
  Junction j;
  j.world.time = 12.0;
  const auto n = j.waiting(D::North, D::South, 10.0);
  const auto s = j.waiting(D::South, D::North, 10.5);
  EXPECT_EQ(j.decide(n), mt::StopDecision::Proceed);
  EXPECT_EQ(j.decide(s), mt::StopDecision::Proceed);
}

TEST(AllWayStop, LivenessOverTenThousandSteps) {
  const auto net = grid(2, 2);
  mt::WorldState w(net, mt::DemandConfig::uniform(*net, 0.06, 0.6), 31);
  const auto ctl = mt::ControllerSet::all_way_stop(*net);
  double worst = 0.0;
  for (int k = 0; k < 10'000; ++k) {
    mt::step(w, {}, ctl);
    for (const auto& node : net->intersections()) {
      for (const auto s : node.approaches) {
        const auto idx = mt::queue_leader(w, s);
        if (!idx) continue;
        const auto& v = w.vehicles[*idx];
        if (v.stop_line_arrival) worst = std::max(worst, w.time - *v.stop_line_arrival);
      }
    }
  }
  EXPECT_LT(worst, 300.0);
  EXPECT_GT(w.exited, 0u);
}

TEST(RandomPolicy, FairCoin) {
  mt::Rng rng(10);
  int go = 0;
  for (int i = 0; i < 10'000; ++i) go += mt::random_rv_policy(rng) == mt::Action::Go;
  EXPECT_NEAR(go / 10'000.0, 0.5, 0.015);
}

TEST(RandomPolicy, SeededStreams) {
  auto draw = [](std::uint64_t seed) {
    mt::Rng rng(seed);
    std::vector<mt::Action> out;
    for (int i = 0; i < 200; ++i) out.push_back(mt::random_rv_policy(rng));
    return out;
  };
  EXPECT_EQ(draw(3), draw(3));
  EXPECT_NE(draw(3), draw(4));
}

TEST(ExitRoom, BlockedExitHoldsEntry) {
  Junction j;
  j.world.time = 12.0;
  const auto& net = j.world.network();
  const auto n = j.waiting(D::North, D::South, 10.0);
  // Stationary vehicle just past the core on the south exit.
  const auto out = exit_to(net, j.c, D::South);
  j.world.inject(vehicle({out}, mt::kCoreRadius + 1.0, 0.0));
  EXPECT_FALSE(mt::exit_has_room(j.world, *j.world.find(n)));
  EXPECT_EQ(j.decide(n), mt::StopDecision::Hold);
}
