#include "mixtraffic/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mixtraffic {

namespace {

using nlohmann::json;

std::string node_ref(IntersectionId id) { return "intersection " + std::to_string(to_int(id)); }
std::string seg_ref(SegmentId id) { return "segment " + std::to_string(to_int(id)); }

// Side of `center` on which `other` lies.
Direction side_towards(Vec2 center, Vec2 other) {
  const double dx = other.x - center.x;
  const double dy = other.y - center.y;
  if (std::abs(dy) >= std::abs(dx)) return dy >= 0.0 ? Direction::North : Direction::South;
  return dx >= 0.0 ? Direction::East : Direction::West;
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& locus) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw NetworkParseError(locus + "." + key, "unknown field");
    }
  }
}

template <typename T>
T required(const json& obj, const char* key, const std::string& locus) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw NetworkParseError(locus + "." + key, "missing field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw NetworkParseError(locus + "." + key, std::string("wrong type: ") + e.what());
  }
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

std::string_view name_of(IntersectionKind kind) {
  switch (kind) {
    case IntersectionKind::ThreeWay: return "three_way";
    case IntersectionKind::FourWay: return "four_way";
    case IntersectionKind::Boundary: return "boundary";
  }
  return "?";
}

std::optional<IntersectionKind> parse_intersection_kind(std::string_view text) {
  if (text == "three_way") return IntersectionKind::ThreeWay;
  if (text == "four_way") return IntersectionKind::FourWay;
  if (text == "boundary") return IntersectionKind::Boundary;
  return std::nullopt;
}

RoadNetwork RoadNetwork::build(const NetworkDescription& desc) {
  RoadNetwork net;
  if (!(desc.zone_radius > 0.0)) {
    throw NetworkValidationError("control_zone_radius > 0", "zone_radius",
                                 "got " + std::to_string(desc.zone_radius));
  }
  net.zone_radius_ = desc.zone_radius;

  for (const auto& n : desc.intersections) {
    Intersection node;
    node.id = n.id;
    node.kind = n.kind;
    node.position = n.position;
    node.control_zone_radius = desc.zone_radius;
    net.intersections_.push_back(node);
  }
  std::sort(net.intersections_.begin(), net.intersections_.end(),
            [](const auto& a, const auto& b) { return to_int(a.id) < to_int(b.id); });
  for (std::size_t i = 0; i < net.intersections_.size(); ++i) {
    const auto id = net.intersections_[i].id;
    if (!net.node_index_.emplace(to_int(id), i).second) {
      throw NetworkValidationError("unique intersection id", node_ref(id), "duplicate id");
    }
  }

  for (const auto& e : desc.segments) {
    if (!net.node_index_.contains(to_int(e.from))) {
      throw NetworkValidationError("segment endpoints exist", node_ref(e.from),
                                   seg_ref(e.id) + " references a missing intersection");
    }
    if (!net.node_index_.contains(to_int(e.to))) {
      throw NetworkValidationError("segment endpoints exist", node_ref(e.to),
                                   seg_ref(e.id) + " references a missing intersection");
    }
    if (e.from == e.to) throw NetworkValidationError("from != to", seg_ref(e.id), "self loop");
    if (!(e.length > 0.0)) throw NetworkValidationError("length > 0", seg_ref(e.id), "non-positive length");
    if (!(e.length > 2.0 * desc.zone_radius)) {
      throw NetworkValidationError("length > 2 x control_zone_radius", seg_ref(e.id),
                                   "control zones of its endpoints would overlap");
    }
    if (!(e.speed_limit > 0.0)) {
      throw NetworkValidationError("speed_limit > 0", seg_ref(e.id), "non-positive speed limit");
    }
    RoadSegment seg;
    seg.id = e.id;
    seg.from = e.from;
    seg.to = e.to;
    seg.length = e.length;
    seg.speed_limit = e.speed_limit;
    const auto& from_pos = net.intersections_[net.node_index_.at(to_int(e.from))].position;
    const auto& to_pos = net.intersections_[net.node_index_.at(to_int(e.to))].position;
    seg.arrival_side = side_towards(to_pos, from_pos);
    seg.departure_side = side_towards(from_pos, to_pos);
    net.segments_.push_back(seg);
  }
  std::sort(net.segments_.begin(), net.segments_.end(),
            [](const auto& a, const auto& b) { return to_int(a.id) < to_int(b.id); });
  std::set<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::size_t i = 0; i < net.segments_.size(); ++i) {
    const auto& s = net.segments_[i];
    if (!net.segment_index_.emplace(to_int(s.id), i).second) {
      throw NetworkValidationError("unique segment id", seg_ref(s.id), "duplicate id");
    }
    if (!pairs.emplace(to_int(s.from), to_int(s.to)).second) {
      throw NetworkValidationError("single lane per direction", seg_ref(s.id),
                                   "parallel segment between the same intersections");
    }
  }
  for (const auto& s : net.segments_) {
    if (!pairs.contains({to_int(s.to), to_int(s.from)})) {
      throw NetworkValidationError("reverse segment exists", seg_ref(s.id), "one-way road");
    }
  }

  net.outgoing_.assign(net.intersections_.size(), {});
  for (const auto& s : net.segments_) {
    auto& head = net.intersections_[net.node_index_.at(to_int(s.to))];
    auto& tail = net.intersections_[net.node_index_.at(to_int(s.from))];
    auto& in_slot = head.approach_by_side[side_index(s.arrival_side)];
    if (in_slot) {
      throw NetworkValidationError("one approach per side", node_ref(head.id),
                                   seg_ref(s.id) + " and " + seg_ref(*in_slot) + " both arrive from side " +
                                       std::string(name_of(s.arrival_side)));
    }
    in_slot = s.id;
    tail.exit_by_side[side_index(s.departure_side)] = s.id;
    net.outgoing_[net.node_index_.at(to_int(s.from))].push_back(s.id);
  }

  for (auto& node : net.intersections_) {
    for (const auto d : kAllDirections) {
      if (node.approach_by_side[side_index(d)]) node.approaches.push_back(*node.approach_by_side[side_index(d)]);
    }
    const auto degree = node.approaches.size();
    const bool ok = (node.kind == IntersectionKind::Boundary && degree == 1) ||
                    (node.kind == IntersectionKind::ThreeWay && degree == 3) ||
                    (node.kind == IntersectionKind::FourWay && degree == 4);
    if (!ok) {
      throw NetworkValidationError("kind matches degree", node_ref(node.id),
                                   "declared " + std::string(name_of(node.kind)) + " but has " +
                                       std::to_string(degree) + " incident roads");
    }
    if (node.is_boundary()) {
      net.entries_.push_back(node.id);
      net.exits_.push_back(node.id);
    }
  }

  // Reachability: every internal node reachable from an entry and reaching an exit.
  const auto n = net.intersections_.size();
  auto sweep = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::queue<std::size_t> frontier;
    for (const auto id : net.entries_) {
      seen[net.node_index_.at(to_int(id))] = 1;
      frontier.push(net.node_index_.at(to_int(id)));
    }
    while (!frontier.empty()) {
      const auto cur = frontier.front();
      frontier.pop();
      for (const auto& s : net.segments_) {
        const auto a = net.node_index_.at(to_int(forward ? s.from : s.to));
        const auto b = net.node_index_.at(to_int(forward ? s.to : s.from));
        if (a == cur && !seen[b]) {
          seen[b] = 1;
          frontier.push(b);
        }
      }
    }
    return seen;
  };
  const auto reached = sweep(true);
  const auto reaches_exit = sweep(false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!reached[i]) {
      throw NetworkValidationError("reachable from an entry", node_ref(net.intersections_[i].id),
                                   "network is not connected to any boundary entry");
    }
    if (!reaches_exit[i]) {
      throw NetworkValidationError("reaches an exit", node_ref(net.intersections_[i].id),
                                   "no path to any boundary exit");
    }
  }
  return net;
}

const Intersection& RoadNetwork::intersection(IntersectionId id) const {
  return intersections_[index_of(id)];
}

const RoadSegment& RoadNetwork::segment(SegmentId id) const { return segments_[index_of(id)]; }

std::size_t RoadNetwork::index_of(IntersectionId id) const {
  const auto it = node_index_.find(to_int(id));
  if (it == node_index_.end()) throw UnknownIdError("unknown " + node_ref(id));
  return it->second;
}

std::size_t RoadNetwork::index_of(SegmentId id) const {
  const auto it = segment_index_.find(to_int(id));
  if (it == segment_index_.end()) throw UnknownIdError("unknown " + seg_ref(id));
  return it->second;
}

std::span<const SegmentId> RoadNetwork::outgoing(IntersectionId id) const { return outgoing_[index_of(id)]; }

std::optional<SegmentId> RoadNetwork::segment_between(IntersectionId from, IntersectionId to) const {
  for (const auto s : outgoing(from)) {
    if (segment(s).to == to) return s;
  }
  return std::nullopt;
}

std::size_t RoadNetwork::internal_count() const {
  return static_cast<std::size_t>(std::count_if(intersections_.begin(), intersections_.end(),
                                                [](const auto& i) { return !i.is_boundary(); }));
}

std::vector<SegmentId> RoadNetwork::shortest_path(IntersectionId from, IntersectionId to) const {
  const auto n = intersections_.size();
  const auto src = index_of(from);
  const auto dst = index_of(to);
  if (src == dst) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<std::optional<SegmentId>> via(n);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[src] = 0.0;
  open.emplace(0.0, src);
  while (!open.empty()) {
    const auto [d, cur] = open.top();
    open.pop();
    if (d > dist[cur]) continue;
    // Boundary nodes are sinks: never route through them.
    if (cur != src && intersections_[cur].is_boundary()) continue;
    for (const auto sid : outgoing_[cur]) {
      const auto& s = segment(sid);
      const auto next = index_of(s.to);
      const double nd = d + s.length;
      const bool better = nd < dist[next] ||
                          (nd == dist[next] && via[next] && to_int(sid) < to_int(*via[next]));
      if (better) {
        dist[next] = nd;
        via[next] = sid;
        open.emplace(nd, next);
      }
    }
  }
  if (!via[dst]) return {};
  std::vector<SegmentId> path;
  for (auto cur = dst; cur != src;) {
    const auto sid = *via[cur];
    path.push_back(sid);
    cur = index_of(segment(sid).from);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

NetworkDescription RoadNetwork::describe() const {
  NetworkDescription desc;
  desc.zone_radius = zone_radius_;
  for (const auto& i : intersections_) desc.intersections.push_back({i.id, i.kind, i.position});
  for (const auto& s : segments_) desc.segments.push_back({s.id, s.from, s.to, s.length, s.speed_limit});
  return desc;
}

RoadNetwork load_network(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw NetworkParseError("line " + std::to_string(line_of(text, e.byte)), e.what());
  }
  if (!doc.is_object()) throw NetworkParseError("line 1", "document must be an object");
  reject_unknown_keys(doc, {"intersections", "segments", "zone_radius"}, "$");

  NetworkDescription desc;
  if (doc.contains("zone_radius")) desc.zone_radius = required<double>(doc, "zone_radius", "$");

  const auto& nodes = doc.value("intersections", json::array());
  if (!nodes.is_array()) throw NetworkParseError("$.intersections", "must be a list");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto locus = "intersections[" + std::to_string(i) + "]";
    const auto& obj = nodes[i];
    if (!obj.is_object()) throw NetworkParseError(locus, "must be an object");
    reject_unknown_keys(obj, {"id", "kind", "x", "y"}, locus);
    NetworkDescription::Node node;
    node.id = IntersectionId{required<std::int32_t>(obj, "id", locus)};
    const auto kind_text = required<std::string>(obj, "kind", locus);
    const auto kind = parse_intersection_kind(kind_text);
    if (!kind) throw NetworkParseError(locus + ".kind", "unknown kind '" + kind_text + "'");
    node.kind = *kind;
    node.position = {required<double>(obj, "x", locus), required<double>(obj, "y", locus)};
    desc.intersections.push_back(node);
  }

  const auto& edges = doc.value("segments", json::array());
  if (!edges.is_array()) throw NetworkParseError("$.segments", "must be a list");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto locus = "segments[" + std::to_string(i) + "]";
    const auto& obj = edges[i];
    if (!obj.is_object()) throw NetworkParseError(locus, "must be an object");
    reject_unknown_keys(obj, {"id", "from", "to", "length", "speed_limit"}, locus);
    NetworkDescription::Edge edge;
    edge.id = SegmentId{required<std::int32_t>(obj, "id", locus)};
    edge.from = IntersectionId{required<std::int32_t>(obj, "from", locus)};
    edge.to = IntersectionId{required<std::int32_t>(obj, "to", locus)};
    edge.length = required<double>(obj, "length", locus);
    edge.speed_limit = required<double>(obj, "speed_limit", locus);
    desc.segments.push_back(edge);
  }
  return RoadNetwork::build(desc);
}

RoadNetwork load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network document " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_network(buf.str());
}

std::string serialize_network(const RoadNetwork& net) {
  json doc;
  doc["zone_radius"] = net.zone_radius();
  auto nodes = json::array();
  for (const auto& i : net.intersections()) {
    nodes.push_back({{"id", to_int(i.id)},
                     {"kind", std::string(name_of(i.kind))},
                     {"x", i.position.x},
                     {"y", i.position.y}});
  }
  auto edges = json::array();
  for (const auto& s : net.segments()) {
    edges.push_back({{"id", to_int(s.id)},
                     {"from", to_int(s.from)},
                     {"to", to_int(s.to)},
                     {"length", s.length},
                     {"speed_limit", s.speed_limit}});
  }
  doc["intersections"] = std::move(nodes);
  doc["segments"] = std::move(edges);
  return doc.dump(2) + "\n";
}

RoadNetwork generate_grid(int rows, int cols, double block_length, double speed_limit) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid needs rows >= 1 and cols >= 1");
  if (!(block_length > 2.0 * kDefaultZoneRadius)) {
    throw std::invalid_argument("block_length must exceed 2 x control zone radius (" +
                                std::to_string(2.0 * kDefaultZoneRadius) + " m)");
  }
  NetworkDescription desc;
  auto internal = [&](int r, int c) { return IntersectionId{r * cols + c}; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      desc.intersections.push_back({internal(r, c), IntersectionKind::FourWay,
                                    {c * block_length, (rows - 1 - r) * block_length}});
    }
  }
  std::int32_t next_node = rows * cols;
  std::int32_t next_seg = 0;
  auto connect = [&](IntersectionId a, IntersectionId b) {
    desc.segments.push_back({SegmentId{next_seg++}, a, b, block_length, speed_limit});
    desc.segments.push_back({SegmentId{next_seg++}, b, a, block_length, speed_limit});
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) connect(internal(r, c), internal(r, c + 1));
      if (r + 1 < rows) connect(internal(r, c), internal(r + 1, c));
    }
  }
  auto stub = [&](IntersectionId at, Vec2 offset) {
    const auto& base = desc.intersections[static_cast<std::size_t>(to_int(at))].position;
    const IntersectionId id{next_node++};
    desc.intersections.push_back({id, IntersectionKind::Boundary, {base.x + offset.x, base.y + offset.y}});
    connect(id, at);
  };
  for (int c = 0; c < cols; ++c) stub(internal(0, c), {0.0, block_length});
  for (int r = 0; r < rows; ++r) stub(internal(r, cols - 1), {block_length, 0.0});
  for (int c = cols - 1; c >= 0; --c) stub(internal(rows - 1, c), {0.0, -block_length});
  for (int r = rows - 1; r >= 0; --r) stub(internal(r, 0), {-block_length, 0.0});
  return RoadNetwork::build(desc);
}

IntersectionId downstream(const RoadNetwork& net, IntersectionId at, SegmentId movement) {
  if (!net.contains(at)) throw UnknownIdError("unknown intersection " + std::to_string(to_int(at)));
  if (!net.contains(movement)) throw UnknownIdError("unknown segment " + std::to_string(to_int(movement)));
  const auto& seg = net.segment(movement);
  if (seg.from != at) {
    throw std::invalid_argument("segment " + std::to_string(to_int(movement)) + " does not leave intersection " +
                                std::to_string(to_int(at)));
  }
  return seg.to;
}

}  // namespace mixtraffic
