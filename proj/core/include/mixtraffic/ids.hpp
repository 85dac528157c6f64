#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace mixtraffic {

enum class IntersectionId : std::int32_t {};
enum class SegmentId : std::int32_t {};
enum class VehicleId : std::int64_t {};

constexpr std::int32_t to_int(IntersectionId id) { return static_cast<std::int32_t>(id); }
constexpr std::int32_t to_int(SegmentId id) { return static_cast<std::int32_t>(id); }
constexpr std::int64_t to_int(VehicleId id) { return static_cast<std::int64_t>(id); }

// Compass sides of an intersection, clockwise. The numeric order is the
// canonical approach order used everywhere (observation slots, tie-breaks).
enum class Direction : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<Direction, 4> kAllDirections{Direction::North, Direction::East,
                                                         Direction::South, Direction::West};

constexpr int side_index(Direction d) { return static_cast<int>(d); }

constexpr Direction opposite(Direction d) {
  return static_cast<Direction>((static_cast<int>(d) + 2) % 4);
}

constexpr std::string_view name_of(Direction d) {
  switch (d) {
    case Direction::North: return "N";
    case Direction::East: return "E";
    case Direction::South: return "S";
    case Direction::West: return "W";
  }
  return "?";
}

}  // namespace mixtraffic
