#include "lastmile/serialize.hpp"

#include "lastmile/error.hpp"

namespace lastmile {

void to_json(json& j, const GeoPoint& p) { j = json{{"lat", p.lat}, {"lon", p.lon}}; }
void from_json(const json& j, GeoPoint& p) {
  p.lat = j.at("lat").get<double>();
  p.lon = j.at("lon").get<double>();
}

void to_json(json& j, const BoundingBox& b) {
  j = json{{"min_lat", b.min_lat}, {"min_lon", b.min_lon}, {"max_lat", b.max_lat}, {"max_lon", b.max_lon}};
}
void from_json(const json& j, BoundingBox& b) {
  b.min_lat = j.at("min_lat").get<double>();
  b.min_lon = j.at("min_lon").get<double>();
  b.max_lat = j.at("max_lat").get<double>();
  b.max_lon = j.at("max_lon").get<double>();
}

void to_json(json& j, const Feature& f) {
  j = json{{"id", f.id},
           {"class", std::string(to_string(f.cls))},
           {"kind", f.kind == GeometryKind::kPolygon ? "polygon" : "polyline"},
           {"points", f.points},
           {"tags", f.tags}};
}
void from_json(const json& j, Feature& f) {
  f.id = j.at("id").get<std::string>();
  const auto cls = feature_class_from_string(j.at("class").get<std::string>());
  if (!cls) throw Error(ErrorCode::kMalformedFile, "unknown feature class");
  f.cls = *cls;
  f.kind = j.at("kind").get<std::string>() == "polygon" ? GeometryKind::kPolygon : GeometryKind::kPolyline;
  f.points = j.at("points").get<std::vector<GeoPoint>>();
  f.tags = j.value("tags", TagMap{});
}

void to_json(json& j, const FeatureSet& fs) {
  j = json{{"extent", fs.extent}, {"dropped", fs.dropped}, {"features", fs.features}};
}
void from_json(const json& j, FeatureSet& fs) {
  fs.extent = j.at("extent").get<BoundingBox>();
  fs.dropped = j.value("dropped", std::size_t{0});
  fs.features = j.at("features").get<std::vector<Feature>>();
}

void to_json(json& j, const StopSet& s) {
  j = json{{"depot", s.depot}, {"stops", s.stops}, {"demands", s.demands}, {"capacity", s.capacity}, {"seed", s.seed}};
}
void from_json(const json& j, StopSet& s) {
  s.depot = j.at("depot").get<GeoPoint>();
  s.stops = j.at("stops").get<std::vector<GeoPoint>>();
  s.demands = j.at("demands").get<std::vector<int>>();
  s.capacity = j.at("capacity").get<int>();
  s.seed = j.value("seed", std::uint64_t{0});
  if (s.demands.size() != s.stops.size()) throw Error(ErrorCode::kMalformedFile, "demands and stops differ in length");
}

void to_json(json& j, const RoutePlan& p) { j = json{{"routes", p.routes}, {"cost", p.cost}}; }
void from_json(const json& j, RoutePlan& p) {
  p.routes = j.at("routes").get<std::vector<Route>>();
  p.cost = j.at("cost").get<double>();
}

void to_json(json& j, const Instance& inst) {
  json rows = json::array();
  for (std::size_t i = 0; i < inst.matrix.size(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < inst.matrix.size(); ++k) row.push_back(inst.matrix(i, k));
    rows.push_back(std::move(row));
  }
  j = json{{"matrix", rows}, {"demands", inst.demands}, {"capacity", inst.capacity}, {"vehicle_count", inst.vehicle_count}};
}
void from_json(const json& j, Instance& inst) {
  const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.size()) throw Error(ErrorCode::kMalformedFile, "matrix is not square");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  inst.matrix = DistanceMatrix(rows.size(), std::move(flat));
  inst.demands = j.at("demands").get<std::vector<int>>();
  inst.capacity = j.at("capacity").get<int>();
  inst.vehicle_count = j.at("vehicle_count").get<std::size_t>();
}

void to_json(json& j, const Leg& leg) {
  j = json{{"id", leg.id},         {"from_stop", leg.from_stop}, {"to_stop", leg.to_stop},
           {"nodes", leg.nodes},   {"path", leg.path},           {"length_m", leg.length_m}};
}
void from_json(const json& j, Leg& leg) {
  leg.id = j.at("id").get<std::string>();
  leg.from_stop = j.at("from_stop").get<std::size_t>();
  leg.to_stop = j.at("to_stop").get<std::size_t>();
  leg.nodes = j.value("nodes", std::vector<NodeId>{});
  leg.path = j.at("path").get<std::vector<GeoPoint>>();
  leg.length_m = j.at("length_m").get<double>();
}

void to_json(json& j, const StyleSheet& s) {
  json classes = json::object();
  for (auto c : kAllFeatureClasses) {
    const auto& cs = s.of(c);
    classes[std::string(to_string(c))] = {
        {"fill", to_hex(cs.fill)}, {"stroke", to_hex(cs.stroke)}, {"stroke_width_px", cs.stroke_width_px}};
  }
  j = json{{"background", to_hex(s.background)}, {"classes", classes},
           {"route", to_hex(s.route)},           {"route_width_px", s.route_width_px},
           {"marker_radius_px", s.marker_radius_px}, {"label_font_px", s.label_font_px}};
}
// Missing keys keep the default style's values.
void from_json(const json& j, StyleSheet& s) {
  s = default_style();
  if (j.contains("background")) s.background = parse_hex_color(j["background"].get<std::string>());
  if (j.contains("classes")) {
    for (const auto& [name, v] : j["classes"].items()) {
      const auto c = feature_class_from_string(name);
      if (!c) throw Error(ErrorCode::kConfigError, "unknown class '" + name + "' in style");
      auto& cs = s.of(*c);
      if (v.contains("fill")) cs.fill = parse_hex_color(v["fill"].get<std::string>());
      if (v.contains("stroke")) cs.stroke = parse_hex_color(v["stroke"].get<std::string>());
      cs.stroke_width_px = v.value("stroke_width_px", cs.stroke_width_px);
    }
  }
  if (j.contains("route")) s.route = parse_hex_color(j["route"].get<std::string>());
  s.route_width_px = j.value("route_width_px", s.route_width_px);
  s.marker_radius_px = j.value("marker_radius_px", s.marker_radius_px);
  s.label_font_px = j.value("label_font_px", s.label_font_px);
}

void to_json(json& j, const OracleBuffers& b) {
  j = json{{"water_m", b.water_m}, {"railway_m", b.railway_m}, {"pedestrian_m", b.pedestrian_m},
           {"park_forest_m", b.park_forest_m}};
}
void from_json(const json& j, OracleBuffers& b) {
  b = OracleBuffers{};
  b.water_m = j.value("water_m", b.water_m);
  b.railway_m = j.value("railway_m", b.railway_m);
  b.pedestrian_m = j.value("pedestrian_m", b.pedestrian_m);
  b.park_forest_m = j.value("park_forest_m", b.park_forest_m);
}

void to_json(json& j, const GroundTruthLabel& l) {
  j = json{{"leg_id", l.leg_id}};
  json evidence = json::object();
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    const std::string key(kQuestions[q].key);
    j[key] = l.answers[q];
    evidence[key] = l.evidence[q];
  }
  j["evidence"] = evidence;
}
void from_json(const json& j, GroundTruthLabel& l) {
  l.leg_id = j.at("leg_id").get<std::string>();
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    const std::string key(kQuestions[q].key);
    l.answers[q] = j.at(key).get<bool>();
    l.evidence[q] = j.contains("evidence") ? j["evidence"].value(key, std::vector<std::string>{})
                                           : std::vector<std::string>{};
  }
}

void to_json(json& j, const Verdict& v) {
  j = json{{"leg_id", v.leg_id}, {"source", std::string(to_string(v.source))}, {"raw_digest", v.raw_digest}};
  for (std::size_t q = 0; q < kQuestionCount; ++q) j[std::string(kQuestions[q].key)] = v.answers[q];
}
void from_json(const json& j, Verdict& v) {
  v.leg_id = j.at("leg_id").get<std::string>();
  for (std::size_t q = 0; q < kQuestionCount; ++q) v.answers[q] = j.at(std::string(kQuestions[q].key)).get<bool>();
  v.source = j.value("source", "direct-parse") == "llm-extracted" ? VerdictSource::kLlmExtracted
                                                                  : VerdictSource::kDirectParse;
  v.raw_digest = j.value("raw_digest", "");
}

namespace {

ErrorCode error_code_from_string(const std::string& s) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::kInvalidArgument); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == s) return static_cast<ErrorCode>(c);
  }
  throw Error(ErrorCode::kMalformedFile, "unknown error code '" + s + "'");
}

}  // namespace

void to_json(json& j, const RawResponse& r) {
  j = json{{"leg_id", r.leg_id},       {"model", r.model},         {"text", r.text},
           {"latency_s", r.latency_s}, {"attempts", r.attempts}, {"timestamp", r.timestamp}};
  if (r.failure) {
    j["failure"] = {{"code", std::string(to_string(r.failure->code))},
                    {"http_status", r.failure->http_status},
                    {"message", r.failure->message}};
  }
}
void from_json(const json& j, RawResponse& r) {
  r.leg_id = j.at("leg_id").get<std::string>();
  r.model = j.value("model", "");
  r.text = j.value("text", "");
  r.latency_s = j.value("latency_s", 0.0);
  r.attempts = j.value("attempts", 0);
  r.timestamp = j.value("timestamp", "");
  r.failure.reset();
  if (j.contains("failure")) {
    const auto& f = j["failure"];
    r.failure = EndpointFailure{error_code_from_string(f.at("code").get<std::string>()), f.value("http_status", 0),
                                f.value("message", "")};
  }
}

void to_json(json& j, const ConfusionMatrix& cm) {
  j = json{{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

void to_json(json& j, const Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  j = json{{"accuracy", opt(m.accuracy)}, {"tpr", opt(m.tpr)},       {"fpr", opt(m.fpr)},
           {"precision", opt(m.precision)}, {"recall", opt(m.recall)}};
}

void to_json(json& j, const ModelReport& r) {
  json per_question = json::object();
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    per_question[std::string(kQuestions[q].key)] = {{"counts", r.scores.per_question[q]},
                                                    {"metrics", r.per_question[q]}};
  }
  j = json{{"model", r.model},
           {"params_billions", r.params_billions ? json(*r.params_billions) : json(nullptr)},
           {"counts", r.scores.micro},
           {"metrics", r.micro},
           {"per_question", per_question},
           {"scored_legs", r.scores.scored_legs},
           {"unanswered", r.unanswered},
           {"parse_failures", r.parse_failures},
           {"llm_extracted", r.llm_extracted},
           {"latency", {{"mean_s", r.latency.mean_s},
                        {"std_s", r.latency.std_s},
                        {"successes", r.latency.successes},
                        {"failures", r.latency.failures}}}};
}

json legs_to_geojson(std::span<const Leg> legs) {
  json features = json::array();
  for (const auto& leg : legs) {
    json coords = json::array();
    for (const auto& p : leg.path) coords.push_back({p.lon, p.lat});
    features.push_back({{"type", "Feature"},
                        {"properties",
                         {{"id", leg.id},
                          {"from_stop", leg.from_stop},
                          {"to_stop", leg.to_stop},
                          {"nodes", leg.nodes},
                          {"length_m", leg.length_m}}},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}};
}

std::vector<Leg> legs_from_geojson(const json& j) {
  std::vector<Leg> out;
  try {
    for (const auto& f : j.at("features")) {
      const auto& p = f.at("properties");
      Leg leg;
      leg.id = p.at("id").get<std::string>();
      leg.from_stop = p.at("from_stop").get<std::size_t>();
      leg.to_stop = p.at("to_stop").get<std::size_t>();
      leg.nodes = p.value("nodes", std::vector<NodeId>{});
      leg.length_m = p.at("length_m").get<double>();
      for (const auto& c : f.at("geometry").at("coordinates")) leg.path.push_back({c.at(1).get<double>(), c.at(0).get<double>()});
      out.push_back(std::move(leg));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("legs GeoJSON: ") + e.what());
  }
  return out;
}

std::map<std::string, GroundTruthLabel> labels_by_leg(std::span<const GroundTruthLabel> labels) {
  std::map<std::string, GroundTruthLabel> out;
  for (const auto& l : labels) {
    if (!out.emplace(l.leg_id, l).second) throw Error(ErrorCode::kMalformedFile, "duplicate label for " + l.leg_id);
  }
  return out;
}

}  // namespace lastmile
