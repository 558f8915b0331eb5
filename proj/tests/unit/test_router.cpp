#include <limits>

#include "doctest.h"
#include "lastmile/distance.hpp"
#include "lastmile/error.hpp"
#include "lastmile/rng.hpp"
#include "lastmile/router.hpp"
#include "lastmile/sampling.hpp"
#include "support.hpp"

using namespace lastmile;

namespace {

std::vector<double> bellman_ford(const RoadGraph& g, NodeId source) {
  std::vector<double> dist(g.node_count(), std::numeric_limits<double>::infinity());
  dist[source] = 0.0;
  for (std::size_t round = 0; round + 1 < g.node_count(); ++round) {
    bool changed = false;
    for (const auto& e : g.edges()) {
      if (dist[e.a] + e.length_m < dist[e.b]) {
        dist[e.b] = dist[e.a] + e.length_m;
        changed = true;
      }
      if (e.bidirectional && dist[e.b] + e.length_m < dist[e.a]) {
        dist[e.a] = dist[e.b] + e.length_m;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return dist;
}

struct Fixture {
  FeatureSet fs;
  RoadGraph graph;
  Clustering clusters;
};

// Candidate stops are the densified graph's own nodes, as in the pipeline.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    out.fs = load_geojson(testing::fixture("blr_extract.geojson"));
    out.graph = extract_road_graph(densify_roads(out.fs, 25.0));
    const auto nodes = out.graph.nodes();
    out.clusters = cluster_points({nodes.begin(), nodes.end()}, 50, 7);
    return out;
  }();
  return f;
}

RoadGraph chain(std::size_t n) {
  std::vector<GeoPoint> nodes;
  std::vector<RoadEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back({0.0, 0.001 * static_cast<double>(i)});
    if (i) edges.push_back({static_cast<NodeId>(i - 1), static_cast<NodeId>(i), haversine(nodes[i - 1], nodes[i])});
  }
  return RoadGraph(nodes, edges);
}

}  // namespace

TEST_CASE("snap to an exact node and break ties low") {
  const auto g = chain(5);
  CHECK(snap(g, g.node(3)) == 3);

  std::vector<GeoPoint> nodes(8, GeoPoint{1.0, 1.0});
  nodes[3] = {0.0, -0.001};
  nodes[7] = {0.0, 0.001};
  const RoadGraph tie(nodes, {});
  CHECK(snap(tie, {0.0, 0.0}) == 3);
}

TEST_CASE("snap agrees with a linear scan on fixture points") {
  const auto& g = fixture().graph;
  Rng rng(3);
  const auto& box = fixture().fs.extent;
  for (int i = 0; i < 50; ++i) {
    const GeoPoint p{box.min_lat + rng.uniform01() * (box.max_lat - box.min_lat),
                     box.min_lon + rng.uniform01() * (box.max_lon - box.min_lon)};
    NodeId best = 0;
    for (NodeId n = 1; n < g.node_count(); ++n) {
      if (haversine(g.node(n), p) < haversine(g.node(best), p)) best = n;
    }
    CHECK(snap(g, p) == best);
  }
}

TEST_CASE("trivial paths") {
  const auto g = chain(3);
  const auto same = shortest_path(g, 1, 1);
  CHECK(same.nodes == std::vector<NodeId>{1});
  CHECK(same.length_m == 0.0);
  const auto line = shortest_path(g, 0, 2);
  CHECK(line.nodes == std::vector<NodeId>{0, 1, 2});
  CHECK(line.length_m == doctest::Approx(haversine(g.node(0), g.node(2))).epsilon(1e-9));
}

TEST_CASE("equal-length paths resolve to the smallest node sequence") {
  const std::vector<GeoPoint> nodes{{0, 0}, {0, 0.001}, {0.001, 0}, {0.001, 0.001}};
  // Edge order deliberately lists the larger detour first.
  const RoadGraph g(nodes, {{0, 2, 1.0}, {2, 3, 1.0}, {0, 1, 1.0}, {1, 3, 1.0}});
  CHECK(shortest_path(g, 0, 3).nodes == std::vector<NodeId>{0, 1, 3});
  CHECK(shortest_path(g, 3, 0).nodes == std::vector<NodeId>{3, 1, 0});
}

TEST_CASE("unreachable and bad ids") {
  const RoadGraph g({{0, 0}, {0, 1}}, {});
  try {
    shortest_path(g, 0, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnreachable);
  }
  CHECK_THROWS_AS(shortest_path(g, 0, 5), Error);
}

TEST_CASE("Dijkstra lengths match Bellman-Ford on 50 fixture pairs") {
  const auto& g = fixture().graph;
  Rng rng(50);
  for (int i = 0; i < 50; ++i) {
    const auto a = static_cast<NodeId>(rng.below(g.node_count()));
    const auto b = static_cast<NodeId>(rng.below(g.node_count()));
    const auto p = shortest_path(g, a, b);
    const auto bf = bellman_ford(g, a);
    CHECK(p.length_m == doctest::Approx(bf[b]).epsilon(1e-9));
    REQUIRE(p.nodes.front() == a);
    REQUIRE(p.nodes.back() == b);
    double walked = 0.0;
    for (std::size_t k = 0; k + 1 < p.nodes.size(); ++k) {
      bool adjacent = false;
      for (const auto& nb : g.neighbors(p.nodes[k])) {
        if (nb.node == p.nodes[k + 1]) {
          adjacent = true;
          walked += nb.length_m;
          break;
        }
      }
      CHECK(adjacent);
    }
    CHECK(walked == doctest::Approx(p.length_m).epsilon(1e-12));
  }
}

TEST_CASE("expand: leg counts and chaining") {
  const auto g = chain(6);
  StopSet s;
  s.depot = g.node(0);
  s.stops = {g.node(2), g.node(4), g.node(5)};
  const auto one = expand(g, s, RoutePlan{{{1}}, 0}, "r7");
  REQUIRE(one.size() == 2);
  CHECK(one[0].id == "r7_leg0");
  CHECK(one[1].id == "r7_leg1");
  CHECK(one[0].from_stop == 0);
  CHECK(one[0].to_stop == 1);

  const auto legs = expand(g, s, RoutePlan{{{1, 2, 3}}, 0});
  REQUIRE(legs.size() == 4);
  for (std::size_t i = 0; i + 1 < legs.size(); ++i) {
    CHECK(legs[i].nodes.back() == legs[i + 1].nodes.front());
    CHECK(legs[i].to_stop == legs[i + 1].from_stop);
  }
  CHECK(legs.back().to_stop == 0);
  CHECK(legs[1].nodes == std::vector<NodeId>{2, 3, 4});
}

TEST_CASE("expanded road length dominates the crow-fly plan cost") {
  const auto& fx = fixture();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = two_stage_sample(fx.clusters, {3, 10, 20, 20, seed});
    const Instance inst{build_matrix(s), s.demands, s.capacity, 1};
    const auto plan = solve_heuristic(inst);
    const auto legs = expand(fx.graph, s, plan);
    CHECK(legs.size() == s.stops.size() + 1);
    double road = 0.0;
    for (const auto& leg : legs) {
      road += leg.length_m;
      CHECK(leg.length_m >= inst.matrix(leg.from_stop, leg.to_stop) * (1 - 1e-9));
      CHECK(leg.length_m == doctest::Approx(path_length(leg.path)).epsilon(1e-3));
      CHECK(leg.path.front() == (leg.from_stop ? s.stops[leg.from_stop - 1] : s.depot));
    }
    CHECK(road >= plan.cost * (1 - 1e-9));
    const auto again = expand(fx.graph, s, plan);
    for (std::size_t i = 0; i < legs.size(); ++i) CHECK(again[i].nodes == legs[i].nodes);
  }
}
