#include "lastmile/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "lastmile/digest.hpp"
#include "lastmile/distance.hpp"
#include "lastmile/error.hpp"

namespace lastmile {

using nlohmann::json;

bool is_valid(const GeoPoint& p) noexcept {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 &&
         p.lon <= 180.0;
}

BoundingBox BoundingBox::of(std::span<const GeoPoint> points) {
  BoundingBox b{90.0, 180.0, -90.0, -180.0};
  for (const auto& p : points) {
    b.min_lat = std::min(b.min_lat, p.lat);
    b.max_lat = std::max(b.max_lat, p.lat);
    b.min_lon = std::min(b.min_lon, p.lon);
    b.max_lon = std::max(b.max_lon, p.lon);
  }
  return b;
}

std::string_view to_string(FeatureClass c) {
  switch (c) {
    case FeatureClass::kRoad: return "road";
    case FeatureClass::kWater: return "water";
    case FeatureClass::kRailway: return "railway";
    case FeatureClass::kPedestrian: return "pedestrian";
    case FeatureClass::kParkForest: return "park_forest";
  }
  return "unknown";
}

std::optional<FeatureClass> feature_class_from_string(std::string_view s) {
  for (auto c : kAllFeatureClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::size_t FeatureSet::count(FeatureClass c) const {
  return static_cast<std::size_t>(
      std::count_if(features.begin(), features.end(), [c](const Feature& f) { return f.cls == c; }));
}

std::optional<FeatureClass> classify_feature(const TagMap& tags, GeometryKind /*kind*/) {
  auto get = [&tags](const char* key) -> const std::string* {
    auto it = tags.find(key);
    return it == tags.end() ? nullptr : &it->second;
  };
  auto is = [&get](const char* key, std::string_view value) {
    const auto* v = get(key);
    return v != nullptr && *v == value;
  };

  if (is("natural", "water") || get("waterway") != nullptr) return FeatureClass::kWater;
  if (get("railway") != nullptr) return FeatureClass::kRailway;
  if (is("highway", "pedestrian") || is("highway", "footway") || is("area", "pedestrian")) {
    return FeatureClass::kPedestrian;
  }
  if (is("leisure", "park") || is("landuse", "forest") || is("natural", "wood")) return FeatureClass::kParkForest;
  if (get("highway") != nullptr) return FeatureClass::kRoad;
  return std::nullopt;
}

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::kMalformedFile, what); }

GeoPoint read_position(const json& pos) {
  if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
    malformed("position must be [lon, lat]");
  }
  GeoPoint p{pos[1].get<double>(), pos[0].get<double>()};
  if (!is_valid(p)) malformed("coordinate out of range");
  return p;
}

std::vector<GeoPoint> read_positions(const json& arr) {
  if (!arr.is_array()) malformed("coordinates must be an array");
  std::vector<GeoPoint> out;
  out.reserve(arr.size());
  for (const auto& pos : arr) out.push_back(read_position(pos));
  return out;
}

// Liang-Barsky against the box; returns the pieces that stay inside.
std::vector<std::vector<GeoPoint>> clip_polyline(const std::vector<GeoPoint>& line, const BoundingBox& box) {
  std::vector<std::vector<GeoPoint>> pieces;
  if (std::all_of(line.begin(), line.end(), [&](const GeoPoint& p) { return box.contains(p); })) {
    pieces.push_back(line);
    return pieces;
  }
  std::vector<GeoPoint> current;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const GeoPoint a = line[i];
    const GeoPoint b = line[i + 1];
    const double dx = b.lon - a.lon;
    const double dy = b.lat - a.lat;
    double t0 = 0.0;
    double t1 = 1.0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {a.lon - box.min_lon, box.max_lon - a.lon, a.lat - box.min_lat, box.max_lat - a.lat};
    bool outside = false;
    for (int k = 0; k < 4 && !outside; ++k) {
      if (p[k] == 0.0) {
        if (q[k] < 0.0) outside = true;
        continue;
      }
      const double r = q[k] / p[k];
      if (p[k] < 0.0) {
        t0 = std::max(t0, r);
      } else {
        t1 = std::min(t1, r);
      }
      if (t0 > t1) outside = true;
    }
    if (outside) {
      if (current.size() >= 2) pieces.push_back(std::move(current));
      current.clear();
      continue;
    }
    const GeoPoint start = t0 == 0.0 ? a : GeoPoint{a.lat + t0 * dy, a.lon + t0 * dx};
    const GeoPoint end = t1 == 1.0 ? b : GeoPoint{a.lat + t1 * dy, a.lon + t1 * dx};
    if (current.empty() || !(current.back() == start)) {
      if (current.size() >= 2) pieces.push_back(std::move(current));
      current.clear();
      current.push_back(start);
    }
    current.push_back(end);
    if (t1 < 1.0) {
      if (current.size() >= 2) pieces.push_back(std::move(current));
      current.clear();
    }
  }
  if (current.size() >= 2) pieces.push_back(std::move(current));
  return pieces;
}

// Sutherland-Hodgman against the box. `ring` is closed; so is the result.
std::vector<GeoPoint> clip_polygon(const std::vector<GeoPoint>& ring, const BoundingBox& box) {
  if (std::all_of(ring.begin(), ring.end(), [&](const GeoPoint& p) { return box.contains(p); })) return ring;
  std::vector<GeoPoint> poly(ring.begin(), ring.end() - 1);
  auto clip_edge = [&poly](auto inside, auto intersect) {
    std::vector<GeoPoint> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const GeoPoint& cur = poly[i];
      const GeoPoint& prev = poly[(i + poly.size() - 1) % poly.size()];
      const bool cin = inside(cur);
      const bool pin = inside(prev);
      if (cin) {
        if (!pin) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (pin) {
        out.push_back(intersect(prev, cur));
      }
    }
    poly = std::move(out);
  };
  auto at_lon = [](double lon) {
    return [lon](const GeoPoint& a, const GeoPoint& b) {
      const double t = (lon - a.lon) / (b.lon - a.lon);
      return GeoPoint{a.lat + t * (b.lat - a.lat), lon};
    };
  };
  auto at_lat = [](double lat) {
    return [lat](const GeoPoint& a, const GeoPoint& b) {
      const double t = (lat - a.lat) / (b.lat - a.lat);
      return GeoPoint{lat, a.lon + t * (b.lon - a.lon)};
    };
  };
  clip_edge([&](const GeoPoint& p) { return p.lon >= box.min_lon; }, at_lon(box.min_lon));
  if (!poly.empty()) clip_edge([&](const GeoPoint& p) { return p.lon <= box.max_lon; }, at_lon(box.max_lon));
  if (!poly.empty()) clip_edge([&](const GeoPoint& p) { return p.lat >= box.min_lat; }, at_lat(box.min_lat));
  if (!poly.empty()) clip_edge([&](const GeoPoint& p) { return p.lat <= box.max_lat; }, at_lat(box.max_lat));
  poly.erase(std::unique(poly.begin(), poly.end()), poly.end());
  if (poly.size() >= 2 && poly.front() == poly.back()) poly.pop_back();
  if (poly.size() < 3) return {};
  poly.push_back(poly.front());
  return poly;
}

TagMap read_tags(const json& props) {
  TagMap tags;
  if (!props.is_object()) return tags;
  for (const auto& [key, value] : props.items()) {
    if (value.is_string()) {
      tags.emplace(key, value.get<std::string>());
    } else if (value.is_number() || value.is_boolean()) {
      tags.emplace(key, value.dump());
    }
  }
  return tags;
}

std::string feature_id(const json& f, const TagMap& tags, std::size_t index) {
  if (auto it = f.find("id"); it != f.end()) {
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number()) return it->dump();
  }
  for (const char* key : {"@id", "id"}) {
    if (auto it = tags.find(key); it != tags.end()) return it->second;
  }
  return "feature/" + std::to_string(index);
}

struct RawPart {
  GeometryKind kind;
  std::vector<GeoPoint> points;
};

// Supported geometries flattened into single rings/lines. Polygon holes are
// not kept.
std::vector<RawPart> read_geometry(const json& geom) {
  std::vector<RawPart> parts;
  if (!geom.is_object()) return parts;
  const auto type = geom.value("type", std::string{});
  const auto& coords = geom.contains("coordinates") ? geom.at("coordinates") : json();
  auto polygon_outer = [](const json& rings) {
    if (!rings.is_array() || rings.empty()) malformed("polygon without rings");
    auto ring = read_positions(rings[0]);
    if (!ring.empty() && !(ring.front() == ring.back())) ring.push_back(ring.front());
    return ring;
  };
  if (type == "LineString") {
    parts.push_back({GeometryKind::kPolyline, read_positions(coords)});
  } else if (type == "MultiLineString") {
    if (!coords.is_array()) malformed("MultiLineString coordinates");
    for (const auto& line : coords) parts.push_back({GeometryKind::kPolyline, read_positions(line)});
  } else if (type == "Polygon") {
    parts.push_back({GeometryKind::kPolygon, polygon_outer(coords)});
  } else if (type == "MultiPolygon") {
    if (!coords.is_array()) malformed("MultiPolygon coordinates");
    for (const auto& poly : coords) parts.push_back({GeometryKind::kPolygon, polygon_outer(poly)});
  }
  return parts;
}

}  // namespace

FeatureSet parse_geojson(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    malformed(std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", std::string{}) != "FeatureCollection") {
    malformed("expected a FeatureCollection");
  }
  const auto features = doc.find("features");
  if (features == doc.end() || !features->is_array()) malformed("FeatureCollection without a features array");

  std::optional<BoundingBox> clip_box;
  if (auto bbox = doc.find("bbox"); bbox != doc.end()) {
    if (!bbox->is_array() || bbox->size() != 4) malformed("bbox must have 4 numbers");
    clip_box = BoundingBox{(*bbox)[1].get<double>(), (*bbox)[0].get<double>(), (*bbox)[3].get<double>(),
                           (*bbox)[2].get<double>()};
    if (clip_box->empty()) malformed("bbox is inverted");
  }

  FeatureSet fs;
  for (std::size_t index = 0; index < features->size(); ++index) {
    const auto& f = (*features)[index];
    if (!f.is_object()) malformed("feature " + std::to_string(index) + " is not an object");
    const auto tags = read_tags(f.contains("properties") ? f.at("properties") : json());
    const auto parts = read_geometry(f.contains("geometry") ? f.at("geometry") : json());
    if (parts.empty()) {
      ++fs.dropped;
      continue;
    }
    const auto cls = classify_feature(tags, parts.front().kind);
    if (!cls) {
      ++fs.dropped;
      continue;
    }
    const auto base_id = feature_id(f, tags, index);
    const bool multi = parts.size() > 1 || f.at("geometry").value("type", "").starts_with("Multi");
    std::size_t kept = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& part = parts[k];
      const auto part_id = multi ? base_id + "#" + std::to_string(k) : base_id;
      std::vector<std::vector<GeoPoint>> pieces;
      if (part.kind == GeometryKind::kPolyline) {
        pieces = clip_box ? clip_polyline(part.points, *clip_box) : std::vector<std::vector<GeoPoint>>{part.points};
      } else {
        auto ring = clip_box ? clip_polygon(part.points, *clip_box) : part.points;
        if (!ring.empty()) pieces.push_back(std::move(ring));
      }
      const std::size_t min_points = part.kind == GeometryKind::kPolyline ? 2 : 4;
      std::erase_if(pieces, [min_points](const auto& p) { return p.size() < min_points; });
      for (std::size_t piece = 0; piece < pieces.size(); ++piece) {
        Feature out;
        out.id = pieces.size() > 1 ? part_id + "~" + std::to_string(piece) : part_id;
        out.cls = *cls;
        out.kind = part.kind;
        out.points = std::move(pieces[piece]);
        out.tags = tags;
        fs.features.push_back(std::move(out));
        ++kept;
      }
    }
    if (kept == 0) ++fs.dropped;
  }
  if (fs.features.empty()) throw Error(ErrorCode::kEmptyExtent, "no usable features");

  if (clip_box) {
    fs.extent = *clip_box;
  } else {
    std::vector<GeoPoint> all;
    for (const auto& f : fs.features) all.insert(all.end(), f.points.begin(), f.points.end());
    fs.extent = BoundingBox::of(all);
  }
  return fs;
}

FeatureSet load_geojson(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    malformed(e.what());
  }
  return parse_geojson(text);
}

RoadGraph::RoadGraph(std::vector<GeoPoint> nodes, std::vector<RoadEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), adjacency_(nodes_.size()) {
  for (const auto& e : edges_) {
    if (e.a >= nodes_.size() || e.b >= nodes_.size()) throw Error(ErrorCode::kBadIndex, "edge endpoint out of range");
    adjacency_[e.a].push_back({e.b, e.length_m});
    if (e.bidirectional) adjacency_[e.b].push_back({e.a, e.length_m});
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end(), [](const Neighbor& x, const Neighbor& y) { return x.node < y.node; });
  }
}

namespace {

// Grid hash with cells the size of the merge tolerance; a vertex merges with
// the lowest-id node within tolerance on both axes.
class NodeIndex {
 public:
  NodeId find_or_add(const GeoPoint& p, std::vector<GeoPoint>& nodes) {
    const auto ci = cell(p.lat);
    const auto cj = cell(p.lon);
    std::optional<NodeId> best;
    for (std::int64_t di = -1; di <= 1; ++di) {
      for (std::int64_t dj = -1; dj <= 1; ++dj) {
        auto it = cells_.find(key(ci + di, cj + dj));
        if (it == cells_.end()) continue;
        for (NodeId id : it->second) {
          const auto& q = nodes[id];
          if (std::abs(q.lat - p.lat) <= kNodeMergeToleranceDeg && std::abs(q.lon - p.lon) <= kNodeMergeToleranceDeg &&
              (!best || id < *best)) {
            best = id;
          }
        }
      }
    }
    if (best) return *best;
    const auto id = static_cast<NodeId>(nodes.size());
    nodes.push_back(p);
    cells_[key(ci, cj)].push_back(id);
    return id;
  }

 private:
  static std::int64_t cell(double deg) { return static_cast<std::int64_t>(std::floor(deg / kNodeMergeToleranceDeg)); }
  static std::uint64_t key(std::int64_t i, std::int64_t j) {
    return (static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ULL) ^ static_cast<std::uint64_t>(j);
  }
  std::unordered_map<std::uint64_t, std::vector<NodeId>> cells_;
};

}  // namespace

RoadGraph extract_road_graph(const FeatureSet& fs) {
  std::vector<GeoPoint> nodes;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  NodeIndex index;
  bool any_road = false;
  for (const auto& f : fs.features) {
    if (f.cls != FeatureClass::kRoad) continue;
    any_road = true;
    std::optional<NodeId> prev;
    for (const auto& p : f.points) {
      const NodeId cur = index.find_or_add(p, nodes);
      if (prev && *prev != cur) pairs.emplace_back(std::min(*prev, cur), std::max(*prev, cur));
      prev = cur;
    }
  }
  if (!any_road) throw Error(ErrorCode::kNoRoads, "feature set has no Road features");
  if (pairs.empty()) throw Error(ErrorCode::kNoRoads, "road features contain no segments");

  // Deduplicate undirected edges, keeping first-appearance order.
  std::vector<std::pair<NodeId, NodeId>> unique_pairs;
  {
    std::unordered_map<std::uint64_t, bool> seen;
    for (const auto& pr : pairs) {
      const auto k = (static_cast<std::uint64_t>(pr.first) << 32) | pr.second;
      if (seen.emplace(k, true).second) unique_pairs.push_back(pr);
    }
  }

  // Union-find for components.
  std::vector<NodeId> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), NodeId{0});
  auto find = [&parent](NodeId x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& [a, b] : unique_pairs) {
    const auto ra = find(a);
    const auto rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  // Roots are component minima, so ties on size go to the lowest root.
  std::vector<std::size_t> size(nodes.size(), 0);
  for (NodeId v = 0; v < nodes.size(); ++v) ++size[find(v)];
  NodeId best_root = 0;
  for (NodeId v = 0; v < nodes.size(); ++v) {
    if (size[v] > size[best_root]) best_root = v;
  }

  std::vector<NodeId> remap(nodes.size(), std::numeric_limits<NodeId>::max());
  std::vector<GeoPoint> kept_nodes;
  for (NodeId v = 0; v < nodes.size(); ++v) {
    if (find(v) == best_root) {
      remap[v] = static_cast<NodeId>(kept_nodes.size());
      kept_nodes.push_back(nodes[v]);
    }
  }
  std::vector<RoadEdge> edges;
  for (const auto& [a, b] : unique_pairs) {
    if (find(a) != best_root) continue;
    const auto na = remap[a];
    const auto nb = remap[b];
    edges.push_back({na, nb, haversine(kept_nodes[na], kept_nodes[nb]), true});
  }
  return RoadGraph(std::move(kept_nodes), std::move(edges));
}

}  // namespace lastmile
