#pragma once

#include <array>
#include <bitset>
#include <optional>

#include "mixtraffic/ids.hpp"
#include "mixtraffic/netmodel.hpp"

namespace mixtraffic {

// Movement through an intersection: arrive on one side, leave through another.
struct Movement {
  Direction from = Direction::North;
  Direction to = Direction::South;

  friend bool operator==(const Movement&, const Movement&) = default;
};

enum class Turn { Through, Left, Right, UTurn };
Turn turn_of(Movement m);

// Movement-pair conflict table for the sides present at an intersection.
// Right-hand traffic. Each lane end is a point on the rim of the box, in
// clockwise order N_in, N_out, E_in, E_out, S_in, S_out, W_in, W_out; a
// movement is the chord from its in-point to its out-point. Two movements
// conflict when their chords cross or share the out-point (merge). Movements
// from the same approach never conflict.
class ConflictMatrix {
 public:
  static ConflictMatrix for_sides(std::bitset<4> present);
  static ConflictMatrix for_intersection(const Intersection& node);

  bool conflicts(Movement a, Movement b) const { return table_[slot(a)][slot(b)]; }
  bool valid(Movement m) const;
  std::bitset<4> sides() const { return present_; }

 private:
  static int slot(Movement m) { return side_index(m.from) * 4 + side_index(m.to); }
  std::bitset<4> present_;
  std::array<std::array<bool, 16>, 16> table_{};
};

// Geometric rule used to fill the table; exposed for tests.
bool movements_conflict(Movement a, Movement b);

}  // namespace mixtraffic
