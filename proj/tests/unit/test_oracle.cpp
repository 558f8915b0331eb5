#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "lastmile/error.hpp"
#include "lastmile/oracle.hpp"
#include "lastmile/projection.hpp"
#include "lastmile/rng.hpp"
#include "support.hpp"

using namespace lastmile;

namespace {

const LocalProjection kProj({12.97, 77.59});

std::vector<GeoPoint> geo(std::initializer_list<Vec2> pts) {
  std::vector<GeoPoint> out;
  for (auto p : pts) out.push_back(kProj.to_geo(p));
  return out;
}

Feature polyline(FeatureClass cls, std::vector<GeoPoint> pts, std::string id = "f") {
  return Feature{std::move(id), cls, GeometryKind::kPolyline, std::move(pts), {}};
}

Feature polygon(FeatureClass cls, std::vector<GeoPoint> ring, std::string id = "p") {
  ring.push_back(ring.front());
  return Feature{std::move(id), cls, GeometryKind::kPolygon, std::move(ring), {}};
}

Leg leg_of(std::vector<GeoPoint> path) {
  Leg l;
  l.id = "x_leg0";
  l.path = std::move(path);
  return l;
}

double point_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double len2 = dot(d, d);
  const double t = len2 == 0 ? 0.0 : std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
  return norm(p - (a + d * t));
}

// Winding number, a different rule from even-odd but identical on simple rings.
bool inside_winding(Vec2 p, const std::vector<Vec2>& ring) {
  int w = 0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Vec2 a = ring[i], b = ring[i + 1];
    const double side = cross(b - a, p - a);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++w;
    } else if (b.y <= p.y && side < 0) {
      --w;
    }
  }
  return w != 0;
}

struct Sampled {
  double min_dist;
  bool inside;
};

// Walks the path in steps of at most `step` meters.
Sampled sample_path(const std::vector<Vec2>& path, const std::vector<Vec2>& feat, bool is_polygon, double step) {
  Sampled s{std::numeric_limits<double>::infinity(), false};
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 a = path[i], b = path[i + 1];
    const int n = std::max(1, static_cast<int>(std::ceil(norm(b - a) / step)));
    for (int k = 0; k <= n; ++k) {
      const Vec2 p = a + (b - a) * (static_cast<double>(k) / n);
      for (std::size_t j = 0; j + 1 < feat.size(); ++j) s.min_dist = std::min(s.min_dist, point_segment(p, feat[j], feat[j + 1]));
      if (is_polygon && inside_winding(p, feat)) s.inside = true;
    }
  }
  return s;
}

std::vector<Vec2> random_walk(Rng& rng, std::size_t n, double extent) {
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({extent * rng.uniform01(), extent * rng.uniform01()});
  return out;
}

// Star-shaped, hence simple.
std::vector<Vec2> random_ring(Rng& rng, double extent) {
  const Vec2 c{extent * rng.uniform01(), extent * rng.uniform01()};
  const std::size_t n = 3 + rng.below(6);
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2 * 3.141592653589793 * (i + 0.8 * rng.uniform01()) / n;
    const double r = 5 + 40 * rng.uniform01();
    out.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  out.push_back(out.front());
  return out;
}

std::vector<GeoPoint> to_geo(const std::vector<Vec2>& v) {
  std::vector<GeoPoint> out;
  for (auto p : v) out.push_back(kProj.to_geo(p));
  return out;
}

// Compares against the sampling oracle, skipping cases within `band` of the
// buffer where 0.25 m sampling cannot decide.
void compare_random(std::uint64_t seed, int cases, bool polygons) {
  Rng rng(seed);
  int decided = 0;
  for (int c = 0; c < cases; ++c) {
    const auto path = random_walk(rng, 2 + rng.below(3), 200);
    const auto feat = polygons ? random_ring(rng, 200) : random_walk(rng, 2 + rng.below(4), 200);
    const double buffer = 20 * rng.uniform01();
    const auto truth = sample_path(path, feat, polygons, 0.25);
    const auto f = polygons ? Feature{"p", FeatureClass::kParkForest, GeometryKind::kPolygon, to_geo(feat), {}}
                            : polyline(FeatureClass::kRailway, to_geo(feat));
    const bool got = polyline_hits(to_geo(path), f, buffer).hit;
    if (truth.inside) {
      CHECK(got);
      ++decided;
      continue;
    }
    if (std::abs(truth.min_dist - buffer) < 0.5) continue;
    CHECK_MESSAGE(got == (truth.min_dist <= buffer), "case " << c << " dist " << truth.min_dist << " buffer " << buffer);
    ++decided;
  }
  CHECK(decided > cases * 9 / 10);
}

}  // namespace

TEST_CASE("path inside a polygon hits it") {
  const auto park = polygon(FeatureClass::kParkForest, geo({{0, 0}, {100, 0}, {100, 100}, {0, 100}}));
  CHECK(polyline_hits(geo({{40, 40}, {60, 60}}), park, 0).hit);
  CHECK_FALSE(polyline_hits(geo({{140, 40}, {160, 60}}), park, 0).hit);
  // Crosses the ring with both endpoints outside.
  CHECK(polyline_hits(geo({{-50, 50}, {150, 50}}), park, 0).hit);
}

TEST_CASE("buffer distance around a railway") {
  const auto rail = polyline(FeatureClass::kRailway, geo({{0, 10}, {200, 10}}));
  const auto path = geo({{0, 0}, {200, 0}});
  CHECK_FALSE(polyline_hits(path, rail, 5).hit);
  CHECK(polyline_hits(path, rail, 15).hit);
  const auto r = polyline_hits(path, rail, 15);
  CHECK(r.locations.size() == 1);
}

TEST_CASE("argument errors") {
  const auto rail = polyline(FeatureClass::kRailway, geo({{0, 10}, {200, 10}}));
  try {
    (void)polyline_hits(geo({{5, 5}, {5, 5}}), rail, 1);
    FAIL("expected DegenerateGeometry");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateGeometry);
  }
  try {
    (void)polyline_hits(geo({{0, 0}, {5, 5}}), rail, -1);
    FAIL("expected InvalidArgument");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("polyline features agree with a sampling oracle") { compare_random(21, 200, false); }

TEST_CASE("polygon features agree with a sampling oracle") { compare_random(22, 1000, true); }

TEST_CASE("hits are monotone in the buffer and ignore path direction") {
  Rng rng(5);
  for (int c = 0; c < 300; ++c) {
    auto path = random_walk(rng, 3, 200);
    const auto feat = random_walk(rng, 3, 200);
    const auto f = polyline(FeatureClass::kWater, to_geo(feat));
    bool prev = false;
    for (double b : {0.0, 2.0, 5.0, 10.0, 20.0, 40.0}) {
      const bool now = polyline_hits(to_geo(path), f, b).hit;
      CHECK((!prev || now));
      prev = now;
      auto rev = path;
      std::reverse(rev.begin(), rev.end());
      CHECK(polyline_hits(to_geo(rev), f, b).hit == now);
    }
  }
}

TEST_CASE("leg through a park only answers yes to the park question") {
  FeatureSet fs;
  fs.features.push_back(polygon(FeatureClass::kParkForest, geo({{50, -50}, {150, -50}, {150, 50}, {50, 50}}), "park1"));
  fs.features.push_back(polygon(FeatureClass::kWater, geo({{50, 300}, {150, 300}, {150, 400}, {50, 400}}), "lake"));
  fs.features.push_back(polyline(FeatureClass::kRailway, geo({{0, 100}, {400, 100}}), "rail"));
  fs.features.push_back(polygon(FeatureClass::kPedestrian, geo({{300, -200}, {350, -200}, {350, -150}}), "plaza"));
  const auto label = label_leg(leg_of(geo({{0, 0}, {200, 0}})), fs);
  CHECK(label.answers == Answers{false, false, false, true});
  CHECK(label.evidence[3] == std::vector<std::string>{"park1"});
  CHECK(label.evidence[0].empty());
}

TEST_CASE("empty feature set labels everything no") {
  const auto label = label_leg(leg_of(geo({{0, 0}, {200, 0}})), FeatureSet{});
  CHECK(label.answers == Answers{});
  CHECK(label.leg_id == "x_leg0");
}

TEST_CASE("railway buffer default catches a crossing beside the line") {
  FeatureSet fs;
  fs.features.push_back(polyline(FeatureClass::kRailway, geo({{0, 4}, {200, 4}}), "r"));
  CHECK(label_leg(leg_of(geo({{0, 0}, {200, 0}})), fs).answers[1]);
  OracleBuffers tight;
  tight.railway_m = 0;
  CHECK_FALSE(label_leg(leg_of(geo({{0, 0}, {200, 0}})), fs, tight).answers[1]);
}

TEST_CASE("annotation import of the sample export") {
  const auto labels = import_annotations(testing::fixture("annotations_sample.json"));
  REQUIRE(labels.size() == 1);
  const auto& l = labels.at("route000_leg0");
  CHECK(l.answers == Answers{false, false, false, true});
  CHECK(l.evidence[3] == std::vector<std::string>{"task/1"});
}

TEST_CASE("annotation errors") {
  auto doc = testing::load_json(testing::fixture("annotations_sample.json"));
  auto expect_malformed = [](const nlohmann::json& d) {
    try {
      (void)parse_annotations(d.dump());
      FAIL("expected MalformedAnnotation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedAnnotation);
    }
  };
  auto missing = doc;
  missing[0]["annotations"][0]["result"].erase(2);
  expect_malformed(missing);
  auto duplicate = doc;
  duplicate.push_back(doc[0]);
  expect_malformed(duplicate);
  auto unknown = doc;
  unknown[0]["annotations"][0]["result"][0]["from_name"] = "q9";
  expect_malformed(unknown);
  auto maybe = doc;
  maybe[0]["annotations"][0]["result"][1]["value"]["choices"][0] = "Maybe";
  expect_malformed(maybe);
  expect_malformed(nlohmann::json::object());

  auto stem = doc;
  stem[0]["data"].erase("leg_id");
  CHECK(parse_annotations(stem.dump()).count("route000_leg0") == 1);
}

TEST_CASE("400-task export matches its manifest") {
  const auto labels = import_annotations(testing::fixture("annotations_400.json"));
  const auto manifest = testing::load_json(testing::fixture("annotations_400.manifest.json"));
  CHECK(labels.size() == manifest["tasks"].get<std::size_t>());
  std::array<std::size_t, kQuestionCount> positives{};
  for (const auto& [id, l] : labels) {
    for (std::size_t q = 0; q < kQuestionCount; ++q) positives[q] += l.answers[q];
  }
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    CHECK(positives[q] == manifest["positives"][std::string(kQuestions[q].key)].get<std::size_t>());
  }
}
