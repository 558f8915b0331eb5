#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lastmile/geo.hpp"
#include "lastmile/sampling.hpp"
#include "lastmile/vrp.hpp"

namespace lastmile {

struct Leg {
  std::string id;          // "{route_id}_leg{n}"
  std::size_t from_stop = 0;  // 0 = depot
  std::size_t to_stop = 0;
  std::vector<NodeId> nodes;
  std::vector<GeoPoint> path;
  double length_m = 0.0;
};

// Nearest node by great-circle distance; ties go to the lowest id.
NodeId snap(const RoadGraph& g, const GeoPoint& p);

struct GraphPath {
  std::vector<NodeId> nodes;
  double length_m = 0.0;
};

// Dijkstra over great-circle edge weights. Among equal-length paths the
// lexicographically smallest node sequence wins.
GraphPath shortest_path(const RoadGraph& g, NodeId from, NodeId to);

// Legs depot -> first, stop -> stop, last -> depot for every route, in plan
// order. Legs are numbered consecutively across the plan: "{route_id}_leg{n}".
std::vector<Leg> expand(const RoadGraph& g, const StopSet& s, const RoutePlan& plan,
                        const std::string& route_id = "route");

double path_length(const std::vector<GeoPoint>& path);

}  // namespace lastmile
