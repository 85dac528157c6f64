#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mixtraffic/ids.hpp"

namespace mixtraffic {

inline constexpr double kDefaultZoneRadius = 30.0;

enum class IntersectionKind { ThreeWay, FourWay, Boundary };

std::string_view name_of(IntersectionKind kind);
std::optional<IntersectionKind> parse_intersection_kind(std::string_view text);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Intersection {
  IntersectionId id{};
  IntersectionKind kind = IntersectionKind::FourWay;
  Vec2 position;
  double control_zone_radius = kDefaultZoneRadius;
  // Incoming segments in canonical N, E, S, W order; absent sides omitted.
  std::vector<SegmentId> approaches;
  // Same data keyed by side, plus the outgoing segment leaving through each side.
  std::array<std::optional<SegmentId>, 4> approach_by_side{};
  std::array<std::optional<SegmentId>, 4> exit_by_side{};

  bool is_boundary() const { return kind == IntersectionKind::Boundary; }
  bool has_side(Direction d) const { return approach_by_side[side_index(d)].has_value(); }

  friend bool operator==(const Intersection&, const Intersection&) = default;
};

struct RoadSegment {
  SegmentId id{};
  IntersectionId from{};
  IntersectionId to{};
  double length = 0.0;       // meters
  double speed_limit = 0.0;  // m/s
  int lane_count = 1;
  // Side of `to` the segment arrives at, and side of `from` it departs through.
  Direction arrival_side = Direction::North;
  Direction departure_side = Direction::North;

  friend bool operator==(const RoadSegment&, const RoadSegment&) = default;
};

// Raised for malformed network documents. `locus` names the line and/or field.
class NetworkParseError : public std::runtime_error {
 public:
  NetworkParseError(std::string locus, const std::string& what)
      : std::runtime_error(locus + ": " + what), locus_(std::move(locus)) {}
  const std::string& locus() const { return locus_; }

 private:
  std::string locus_;
};

// Raised when a well-formed description violates a network invariant.
class NetworkValidationError : public std::runtime_error {
 public:
  NetworkValidationError(std::string invariant, std::string offending_id, const std::string& what)
      : std::runtime_error("invariant '" + invariant + "' violated by " + offending_id + ": " + what),
        invariant_(std::move(invariant)),
        offending_id_(std::move(offending_id)) {}
  const std::string& invariant() const { return invariant_; }
  const std::string& offending_id() const { return offending_id_; }

 private:
  std::string invariant_;
  std::string offending_id_;
};

// Raised on lookups of ids the network does not contain.
class UnknownIdError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Raw description of a network as it appears in a document, before derivation
// of approaches and validation.
struct NetworkDescription {
  struct Node {
    IntersectionId id{};
    IntersectionKind kind = IntersectionKind::FourWay;
    Vec2 position;
  };
  struct Edge {
    SegmentId id{};
    IntersectionId from{};
    IntersectionId to{};
    double length = 0.0;
    double speed_limit = 13.9;
  };
  std::vector<Node> intersections;
  std::vector<Edge> segments;
  double zone_radius = kDefaultZoneRadius;
};

// Directed road graph. Immutable once built; all accessors are const and the
// object may be shared across threads.
class RoadNetwork {
 public:
  // Validates `desc` and derives approach ordering. Throws NetworkValidationError.
  static RoadNetwork build(const NetworkDescription& desc);

  std::span<const Intersection> intersections() const { return intersections_; }
  std::span<const RoadSegment> segments() const { return segments_; }
  std::span<const IntersectionId> entries() const { return entries_; }
  std::span<const IntersectionId> exits() const { return exits_; }
  double zone_radius() const { return zone_radius_; }

  const Intersection& intersection(IntersectionId id) const;
  const RoadSegment& segment(SegmentId id) const;
  bool contains(IntersectionId id) const { return node_index_.contains(to_int(id)); }
  bool contains(SegmentId id) const { return segment_index_.contains(to_int(id)); }

  // Dense index of an id in intersections() / segments().
  std::size_t index_of(IntersectionId id) const;
  std::size_t index_of(SegmentId id) const;

  std::span<const SegmentId> outgoing(IntersectionId id) const;
  std::optional<SegmentId> segment_between(IntersectionId from, IntersectionId to) const;

  // Internal (non-boundary) intersection count.
  std::size_t internal_count() const;

  // Shortest path by length; ties broken toward lower segment ids. Empty when
  // unreachable or from == to.
  std::vector<SegmentId> shortest_path(IntersectionId from, IntersectionId to) const;

  NetworkDescription describe() const;

  friend bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
    return a.intersections_ == b.intersections_ && a.segments_ == b.segments_ &&
           a.zone_radius_ == b.zone_radius_;
  }

 private:
  std::vector<Intersection> intersections_;  // sorted by id
  std::vector<RoadSegment> segments_;        // sorted by id
  std::vector<std::vector<SegmentId>> outgoing_;
  std::vector<IntersectionId> entries_;
  std::vector<IntersectionId> exits_;
  std::unordered_map<std::int32_t, std::size_t> node_index_;
  std::unordered_map<std::int32_t, std::size_t> segment_index_;
  double zone_radius_ = kDefaultZoneRadius;
};

// Parses and validates a network document (JSON; see README for the schema).
RoadNetwork load_network(std::string_view text);
RoadNetwork load_network_file(const std::string& path);
std::string serialize_network(const RoadNetwork& net);

// rows x cols four-way grid with boundary stubs on the perimeter. Throws
// std::invalid_argument when rows/cols < 1 or block_length <= 2 * zone radius.
RoadNetwork generate_grid(int rows, int cols, double block_length, double speed_limit = 13.9);

// Head intersection of `movement`, which must leave `at`.
IntersectionId downstream(const RoadNetwork& net, IntersectionId at, SegmentId movement);

}  // namespace mixtraffic
