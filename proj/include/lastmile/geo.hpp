#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lastmile {

// WGS84 coordinate in degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p) noexcept;

struct BoundingBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;

  bool contains(const GeoPoint& p) const noexcept {
    return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
  }
  bool empty() const noexcept { return !(max_lat >= min_lat && max_lon >= min_lon); }

  static BoundingBox of(std::span<const GeoPoint> points);

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class FeatureClass { kRoad, kWater, kRailway, kPedestrian, kParkForest };

inline constexpr FeatureClass kAllFeatureClasses[] = {
    FeatureClass::kRoad, FeatureClass::kWater, FeatureClass::kRailway, FeatureClass::kPedestrian,
    FeatureClass::kParkForest};

std::string_view to_string(FeatureClass c);
std::optional<FeatureClass> feature_class_from_string(std::string_view s);

enum class GeometryKind { kPolyline, kPolygon };

using TagMap = std::map<std::string, std::string>;

struct Feature {
  std::string id;
  FeatureClass cls = FeatureClass::kRoad;
  GeometryKind kind = GeometryKind::kPolyline;
  // Polygons are closed rings: first == last, at least 4 points.
  std::vector<GeoPoint> points;
  TagMap tags;

  friend bool operator==(const Feature&, const Feature&) = default;
};

struct FeatureSet {
  std::vector<Feature> features;
  BoundingBox extent;
  // Features skipped on ingest: unclassifiable tags, unsupported geometry,
  // or nothing left after clipping.
  std::size_t dropped = 0;

  std::size_t count(FeatureClass c) const;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

// Tag precedence: Water > Railway > Pedestrian > ParkForest > Road.
// `kind` is accepted for interface symmetry; the current table does not
// depend on it.
std::optional<FeatureClass> classify_feature(const TagMap& tags, GeometryKind kind);

FeatureSet load_geojson(const std::filesystem::path& path);
FeatureSet parse_geojson(std::string_view text);

using NodeId = std::uint32_t;

struct RoadEdge {
  NodeId a = 0;
  NodeId b = 0;
  double length_m = 0.0;
  bool bidirectional = true;
};

struct Neighbor {
  NodeId node = 0;
  double length_m = 0.0;
};

class RoadGraph {
 public:
  RoadGraph() = default;
  RoadGraph(std::vector<GeoPoint> nodes, std::vector<RoadEdge> edges);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const GeoPoint& node(NodeId id) const { return nodes_.at(id); }
  std::span<const GeoPoint> nodes() const noexcept { return nodes_; }
  std::span<const RoadEdge> edges() const noexcept { return edges_; }
  // Sorted by neighbour id.
  std::span<const Neighbor> neighbors(NodeId id) const { return adjacency_.at(id); }

 private:
  std::vector<GeoPoint> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

inline constexpr double kNodeMergeToleranceDeg = 1e-7;

// Builds the routable graph from Road features and keeps the largest
// connected component. Node ids follow first appearance in feature order.
RoadGraph extract_road_graph(const FeatureSet& fs);

}  // namespace lastmile
