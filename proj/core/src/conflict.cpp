#include "mixtraffic/conflict.hpp"

namespace mixtraffic {

namespace {

int in_point(Direction d) { return 2 * side_index(d); }
int out_point(Direction d) { return 2 * side_index(d) + 1; }

// Strictly between a and b walking clockwise on the 8-point rim.
bool strictly_between(int a, int b, int x) {
  const int span = (b - a + 8) % 8;
  const int off = (x - a + 8) % 8;
  return off > 0 && off < span;
}

}  // namespace

Turn turn_of(Movement m) {
  switch ((side_index(m.to) - side_index(m.from) + 4) % 4) {
    case 0: return Turn::UTurn;
    case 1: return Turn::Left;
    case 2: return Turn::Through;
    default: return Turn::Right;
  }
}

bool movements_conflict(Movement a, Movement b) {
  if (a.from == b.from) return false;
  if (a.to == b.to) return true;
  const int a0 = in_point(a.from), a1 = out_point(a.to);
  const int b0 = in_point(b.from), b1 = out_point(b.to);
  return strictly_between(a0, a1, b0) != strictly_between(a0, a1, b1);
}

ConflictMatrix ConflictMatrix::for_sides(std::bitset<4> present) {
  ConflictMatrix cm;
  cm.present_ = present;
  for (const auto af : kAllDirections) {
    for (const auto at : kAllDirections) {
      const Movement a{af, at};
      if (!cm.valid(a)) continue;
      for (const auto bf : kAllDirections) {
        for (const auto bt : kAllDirections) {
          const Movement b{bf, bt};
          if (!cm.valid(b)) continue;
          cm.table_[slot(a)][slot(b)] = movements_conflict(a, b);
        }
      }
    }
  }
  return cm;
}

ConflictMatrix ConflictMatrix::for_intersection(const Intersection& node) {
  std::bitset<4> present;
  for (const auto d : kAllDirections) present[side_index(d)] = node.has_side(d);
  return for_sides(present);
}

bool ConflictMatrix::valid(Movement m) const {
  return m.from != m.to && present_[side_index(m.from)] && present_[side_index(m.to)];
}

}  // namespace mixtraffic
