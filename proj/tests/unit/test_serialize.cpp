#include "doctest.h"
#include "lastmile/error.hpp"
#include "lastmile/serialize.hpp"
#include "support.hpp"

using namespace lastmile;

template <typename T>
T round_trip(const T& v) {
  return json::parse(json(v).dump()).get<T>();
}

TEST_CASE("feature sets survive a JSON round trip") {
  const auto fs = load_geojson(testing::fixture("blr_extract.geojson"));
  CHECK(round_trip(fs) == fs);
}

TEST_CASE("legs survive GeoJSON") {
  std::vector<Leg> legs(2);
  legs[0] = {"r_leg0", 0, 3, {4, 9, 11}, {{12.97, 77.59}, {12.971, 77.5912345678901}, {12.972, 77.592}}, 321.123456789};
  legs[1] = {"r_leg1", 3, 0, {11, 4}, {{12.972, 77.592}, {12.97, 77.59}}, 300.5};
  const auto back = legs_from_geojson(json::parse(legs_to_geojson(legs).dump()));
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == legs[i].id);
    CHECK(back[i].from_stop == legs[i].from_stop);
    CHECK(back[i].to_stop == legs[i].to_stop);
    CHECK(back[i].nodes == legs[i].nodes);
    CHECK(back[i].path == legs[i].path);
    CHECK(back[i].length_m == legs[i].length_m);
  }
  CHECK_THROWS_AS(legs_from_geojson(json::object()), Error);
}

TEST_CASE("instances, plans and styles") {
  Instance inst{DistanceMatrix(2, {0.0, 1.25, 1.25, 0.0}), {3}, 5, 2};
  const auto back = round_trip(inst);
  CHECK(back.matrix(0, 1) == 1.25);
  CHECK(back.demands == inst.demands);
  CHECK(back.vehicle_count == 2);
  const RoutePlan plan{{{2, 1}, {3}}, 12.5};
  CHECK(round_trip(plan) == plan);

  auto style = default_style();
  style.route_width_px = 4.5;
  const auto s = round_trip(style);
  CHECK(style_digest(s) == style_digest(style));
  // Partial style files keep the defaults for what they omit.
  const auto partial = json::parse(R"({"route":"#00FF00"})").get<StyleSheet>();
  CHECK(partial.route == Rgb{0, 0xFF, 0});
  CHECK(partial.of(FeatureClass::kWater).fill == default_style().of(FeatureClass::kWater).fill);
}

TEST_CASE("responses and labels") {
  RawResponse r;
  r.leg_id = "l";
  r.model = "m";
  r.text = "t";
  r.attempts = 2;
  r.failure = EndpointFailure{ErrorCode::kTimeout, 0, "slow"};
  const auto back = round_trip(r);
  REQUIRE(back.failure);
  CHECK(back.failure->code == ErrorCode::kTimeout);
  CHECK(back.attempts == 2);

  GroundTruthLabel l{"x", {true, false, false, true}, {{{"w1"}, {}, {}, {"p1", "p2"}}}};
  CHECK(round_trip(l) == l);
  const std::vector<GroundTruthLabel> dup{l, l};
  CHECK_THROWS_AS(labels_by_leg(dup), Error);
}
