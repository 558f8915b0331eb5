#include "lastmile/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "lastmile/distance.hpp"
#include "lastmile/error.hpp"

namespace lastmile {

NodeId snap(const RoadGraph& g, const GeoPoint& p) {
  if (g.node_count() == 0) throw Error(ErrorCode::kUnreachable, "empty road graph");
  NodeId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (NodeId i = 0; i < g.node_count(); ++i) {
    const double d = haversine(g.node(i), p);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

namespace {

std::vector<double> dijkstra(const RoadGraph& g, NodeId source) {
  std::vector<double> dist(g.node_count(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = 0.0;
  pq.push({0.0, source});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& nb : g.neighbors(u)) {
      const double nd = d + nb.length_m;
      if (nd < dist[nb.node]) {
        dist[nb.node] = nd;
        pq.push({nd, nb.node});
      }
    }
  }
  return dist;
}

}  // namespace

GraphPath shortest_path(const RoadGraph& g, NodeId from, NodeId to) {
  if (from >= g.node_count() || to >= g.node_count()) throw Error(ErrorCode::kBadIndex, "node id out of range");
  if (from == to) return {{from}, 0.0};
  const auto ds = dijkstra(g, from);
  if (!std::isfinite(ds[to])) {
    throw Error(ErrorCode::kUnreachable, "no path " + std::to_string(from) + " -> " + std::to_string(to));
  }
  const auto dt = dijkstra(g, to);
  const double total = ds[to];
  // Edges lying on some shortest path form a DAG towards `to`; walking it
  // with the smallest admissible neighbour yields the lexicographically
  // smallest shortest node sequence. The slack absorbs summation order.
  const double slack = 1e-9 * std::max(1.0, total);
  GraphPath out;
  out.nodes.push_back(from);
  NodeId u = from;
  double walked = 0.0;
  while (u != to) {
    bool moved = false;
    for (const auto& nb : g.neighbors(u)) {
      if (walked + nb.length_m + dt[nb.node] <= total + slack && ds[u] + nb.length_m <= ds[nb.node] + slack) {
        walked += nb.length_m;
        u = nb.node;
        out.nodes.push_back(u);
        moved = true;
        break;
      }
    }
    if (!moved || out.nodes.size() > g.node_count()) {
      throw Error(ErrorCode::kUnreachable, "path reconstruction failed");
    }
  }
  out.length_m = walked;
  return out;
}

double path_length(const std::vector<GeoPoint>& path) {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) sum += haversine(path[i], path[i + 1]);
  return sum;
}

std::vector<Leg> expand(const RoadGraph& g, const StopSet& s, const RoutePlan& plan, const std::string& route_id) {
  std::vector<NodeId> snapped;
  snapped.push_back(snap(g, s.depot));
  for (const auto& p : s.stops) snapped.push_back(snap(g, p));

  std::vector<Leg> legs;
  auto add = [&](std::size_t a, std::size_t b) {
    if (a > s.stops.size() || b > s.stops.size()) throw Error(ErrorCode::kBadIndex, "stop index out of range");
    const auto gp = shortest_path(g, snapped[a], snapped[b]);
    Leg leg;
    leg.id = route_id + "_leg" + std::to_string(legs.size());
    leg.from_stop = a;
    leg.to_stop = b;
    leg.nodes = gp.nodes;
    for (auto n : gp.nodes) leg.path.push_back(g.node(n));
    leg.length_m = path_length(leg.path);
    legs.push_back(std::move(leg));
  };
  for (const auto& route : plan.routes) {
    if (route.empty()) continue;
    std::size_t prev = 0;
    for (auto c : route) {
      add(prev, c);
      prev = c;
    }
    add(prev, 0);
  }
  return legs;
}

}  // namespace lastmile
