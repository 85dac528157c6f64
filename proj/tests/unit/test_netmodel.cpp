#include <gtest/gtest.h>

#include <algorithm>
#include <string>

#include "mixtraffic/netmodel.hpp"

namespace mt = mixtraffic;

namespace {

const char* kSingle = R"({
  "intersections": [
    {"id": 0, "kind": "four_way", "x": 0, "y": 0},
    {"id": 1, "kind": "boundary", "x": 0, "y": 200},
    {"id": 2, "kind": "boundary", "x": 200, "y": 0},
    {"id": 3, "kind": "boundary", "x": 0, "y": -200},
    {"id": 4, "kind": "boundary", "x": -200, "y": 0}
  ],
  "segments": [
    {"id": 0, "from": 1, "to": 0, "length": 200, "speed_limit": 13.9},
    {"id": 1, "from": 0, "to": 1, "length": 200, "speed_limit": 13.9},
    {"id": 2, "from": 2, "to": 0, "length": 200, "speed_limit": 13.9},
    {"id": 3, "from": 0, "to": 2, "length": 200, "speed_limit": 13.9},
    {"id": 4, "from": 3, "to": 0, "length": 200, "speed_limit": 13.9},
    {"id": 5, "from": 0, "to": 3, "length": 200, "speed_limit": 13.9},
    {"id": 6, "from": 4, "to": 0, "length": 200, "speed_limit": 13.9},
    {"id": 7, "from": 0, "to": 4, "length": 200, "speed_limit": 13.9}
  ]
})";

std::size_t count_kind(const mt::RoadNetwork& net, mt::IntersectionKind kind) {
  return static_cast<std::size_t>(std::count_if(net.intersections().begin(), net.intersections().end(),
                                                [&](const auto& n) { return n.kind == kind; }));
}

// Hand count of the grid construction: horizontal links r*(c-1), vertical
// links c*(r-1), both directions; one stub per perimeter side position.
struct GridCounts {
  std::size_t internal, internal_segments, stubs;
};
GridCounts hand_count(int r, int c) {
  std::size_t links = 0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j + 1 < c; ++j) ++links;
  for (int j = 0; j < c; ++j)
    for (int i = 0; i + 1 < r; ++i) ++links;
  return {static_cast<std::size_t>(r * c), 2 * links, static_cast<std::size_t>(2 * c + 2 * r)};
}

std::size_t internal_segments(const mt::RoadNetwork& net) {
  std::size_t n = 0;
  for (const auto& s : net.segments()) {
    if (!net.intersection(s.from).is_boundary() && !net.intersection(s.to).is_boundary()) ++n;
  }
  return n;
}

}  // namespace

TEST(LoadNetwork, SingleFourWayWithStubs) {
  const auto net = mt::load_network(kSingle);
  EXPECT_EQ(net.intersections().size(), 5u);
  EXPECT_EQ(count_kind(net, mt::IntersectionKind::FourWay), 1u);
  EXPECT_EQ(count_kind(net, mt::IntersectionKind::Boundary), 4u);
  EXPECT_EQ(net.segments().size(), 8u);
  const auto& center = net.intersection(mt::IntersectionId{0});
  ASSERT_EQ(center.approaches.size(), 4u);
  // N, E, S, W: from boundary 1 (north), 2 (east), 3 (south), 4 (west).
  EXPECT_EQ(center.approaches[0], mt::SegmentId{0});
  EXPECT_EQ(center.approaches[1], mt::SegmentId{2});
  EXPECT_EQ(center.approaches[2], mt::SegmentId{4});
  EXPECT_EQ(center.approaches[3], mt::SegmentId{6});
}

TEST(LoadNetwork, MissingEndpointNamesTheId) {
  std::string doc = kSingle;
  doc.replace(doc.find(R"("from": 4, "to": 0)"), 18, R"("from": 9, "to": 0)");
  try {
    mt::load_network(doc);
    FAIL() << "expected a validation error";
  } catch (const mt::NetworkValidationError& e) {
    EXPECT_NE(std::string(e.offending_id()).find('9'), std::string::npos) << e.what();
  }
}

TEST(LoadNetwork, UnknownFieldIsAParseError) {
  std::string doc = kSingle;
  doc.replace(doc.find(R"("x": 0, "y": 0})"), 15, R"("x": 0, "y": 0, "lanes": 2})");
  EXPECT_THROW(mt::load_network(doc), mt::NetworkParseError);
}

TEST(LoadNetwork, MalformedTextIsAParseError) {
  EXPECT_THROW(mt::load_network("{\"intersections\": [}"), mt::NetworkParseError);
}

TEST(LoadNetwork, KindMustMatchDegree) {
  std::string doc = kSingle;
  doc.replace(doc.find("four_way"), 8, "three_way");
  try {
    mt::load_network(doc);
    FAIL();
  } catch (const mt::NetworkValidationError& e) {
    EXPECT_EQ(e.invariant(), "kind matches degree");
  }
}

TEST(LoadNetwork, ShippedNet17) {
  const auto net = mt::load_network_file(MIXTRAFFIC_DATA_DIR "/net17.json");
  EXPECT_EQ(net.internal_count(), 17u);
  EXPECT_GT(count_kind(net, mt::IntersectionKind::ThreeWay), 0u);
  EXPECT_GT(count_kind(net, mt::IntersectionKind::FourWay), 0u);
  for (const auto& n : net.intersections()) {
    if (n.is_boundary()) continue;
    EXPECT_EQ(n.approaches.size(), n.kind == mt::IntersectionKind::FourWay ? 4u : 3u);
  }
}

TEST(GenerateGrid, OneByOne) {
  const auto net = mt::generate_grid(1, 1, 200);
  EXPECT_EQ(net.internal_count(), 1u);
  EXPECT_EQ(count_kind(net, mt::IntersectionKind::Boundary), 4u);
  EXPECT_EQ(net.segments().size(), 8u);
}

TEST(GenerateGrid, ThreeByThreeCounts) {
  const auto net = mt::generate_grid(3, 3, 200);
  EXPECT_EQ(net.internal_count(), 9u);
  EXPECT_EQ(internal_segments(net), 24u);
  EXPECT_EQ(count_kind(net, mt::IntersectionKind::Boundary), 12u);
}

TEST(GenerateGrid, RejectsOverlappingZones) {
  EXPECT_THROW(mt::generate_grid(2, 2, 50), std::invalid_argument);
  EXPECT_THROW(mt::generate_grid(2, 2, 60), std::invalid_argument);
  EXPECT_THROW(mt::generate_grid(0, 2, 200), std::invalid_argument);
}

TEST(GenerateGrid, CountsAndRoundTripProperty) {
  for (int r = 1; r <= 4; ++r) {
    for (int c = 1; c <= 4; ++c) {
      const auto net = mt::generate_grid(r, c, 150);
      const auto want = hand_count(r, c);
      EXPECT_EQ(net.internal_count(), want.internal);
      EXPECT_EQ(internal_segments(net), want.internal_segments);
      EXPECT_EQ(count_kind(net, mt::IntersectionKind::Boundary), want.stubs);
      for (const auto& n : net.intersections()) {
        if (!n.is_boundary()) EXPECT_EQ(n.approaches.size(), 4u);
        for (const auto s : n.approaches) EXPECT_EQ(net.segment(s).to, n.id);
      }
      EXPECT_EQ(mt::load_network(mt::serialize_network(net)), net) << r << "x" << c;
    }
  }
}

TEST(Downstream, FromCenterOfOneByOne) {
  const auto net = mt::generate_grid(1, 1, 200);
  const auto center = net.intersections()[0].is_boundary() ? net.intersections()[1].id : net.intersections()[0].id;
  for (const auto s : net.outgoing(center)) {
    EXPECT_TRUE(net.intersection(mt::downstream(net, center, s)).is_boundary());
  }
}

TEST(Downstream, EastboundInTwoByOne) {
  const auto net = mt::generate_grid(1, 2, 200);
  mt::IntersectionId west{}, east{};
  for (const auto& n : net.intersections()) {
    if (n.is_boundary()) continue;
    (n.position.x == 0.0 ? west : east) = n.id;
  }
  const auto& w = net.intersection(west);
  const auto eastbound = *w.exit_by_side[mt::side_index(mt::Direction::East)];
  EXPECT_EQ(mt::downstream(net, west, eastbound), east);
  EXPECT_THROW(mt::downstream(net, west, mt::SegmentId{999}), mt::UnknownIdError);
}

TEST(ShortestPath, ReachesEveryExitFromEveryEntry) {
  const auto net = mt::generate_grid(3, 2, 200);
  for (const auto in : net.entries()) {
    for (const auto out : net.exits()) {
      if (in == out) continue;
      const auto path = net.shortest_path(in, out);
      ASSERT_FALSE(path.empty());
      EXPECT_EQ(net.segment(path.front()).from, in);
      EXPECT_EQ(net.segment(path.back()).to, out);
      for (std::size_t i = 1; i < path.size(); ++i) {
        EXPECT_EQ(net.segment(path[i - 1]).to, net.segment(path[i]).from);
      }
    }
  }
}
