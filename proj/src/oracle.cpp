#include "lastmile/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "lastmile/digest.hpp"
#include "lastmile/error.hpp"
#include "lastmile/extraction.hpp"
#include "lastmile/projection.hpp"

namespace lastmile {

double OracleBuffers::of(FeatureClass c) const {
  switch (c) {
    case FeatureClass::kWater: return water_m;
    case FeatureClass::kRailway: return railway_m;
    case FeatureClass::kPedestrian: return pedestrian_m;
    case FeatureClass::kParkForest: return park_forest_m;
    case FeatureClass::kRoad: return 0.0;
  }
  return 0.0;
}

namespace {

struct Closest {
  double dist;
  Vec2 on_path;  // point of the path segment realising `dist`
};

Vec2 project_onto(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double len2 = dot(d, d);
  if (len2 <= 0.0) return a;
  return a + d * std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
}

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0) - (v < 0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

// Closest approach between path segment pq and feature segment ab.
Closest segment_distance(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
  const int o1 = orientation(p, q, a);
  const int o2 = orientation(p, q, b);
  const int o3 = orientation(a, b, p);
  const int o4 = orientation(a, b, q);
  if (o1 != o2 && o3 != o4) {
    const Vec2 r = q - p;
    const Vec2 s = b - a;
    const double den = cross(r, s);
    const double t = den != 0.0 ? std::clamp(cross(a - p, s) / den, 0.0, 1.0) : 0.0;
    return {0.0, p + r * t};
  }
  if (o1 == 0 && on_segment(p, q, a)) return {0.0, a};
  if (o2 == 0 && on_segment(p, q, b)) return {0.0, b};
  if (o3 == 0 && on_segment(a, b, p)) return {0.0, p};
  if (o4 == 0 && on_segment(a, b, q)) return {0.0, q};

  Closest best{norm(p - project_onto(p, a, b)), p};
  auto consider = [&best](double d, Vec2 at) {
    if (d < best.dist) best = {d, at};
  };
  consider(norm(q - project_onto(q, a, b)), q);
  const Vec2 pa = project_onto(a, p, q);
  consider(norm(a - pa), pa);
  const Vec2 pb = project_onto(b, p, q);
  consider(norm(b - pb), pb);
  return best;
}

bool inside_even_odd(Vec2 p, const std::vector<Vec2>& ring) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

struct Box2 {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void add(Vec2 p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  bool overlaps(const Box2& o, double margin) const {
    return min_x - margin <= o.max_x && o.min_x <= max_x + margin && min_y - margin <= o.max_y &&
           o.min_y <= max_y + margin;
  }
};

}  // namespace

HitResult polyline_hits(std::span<const GeoPoint> path, const Feature& feature, double buffer_m) {
  if (!(buffer_m >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "buffer must be >= 0");
  if (path.size() < 2 || std::all_of(path.begin(), path.end(), [&](const GeoPoint& p) { return p == path[0]; })) {
    throw Error(ErrorCode::kDegenerateGeometry, "path has zero length");
  }
  const auto box = BoundingBox::of(path);
  const LocalProjection proj({(box.min_lat + box.max_lat) / 2, (box.min_lon + box.max_lon) / 2});

  std::vector<Vec2> p;
  Box2 path_box;
  for (const auto& g : path) {
    p.push_back(proj.to_xy(g));
    path_box.add(p.back());
  }
  std::vector<Vec2> f;
  Box2 feature_box;
  for (const auto& g : feature.points) {
    f.push_back(proj.to_xy(g));
    feature_box.add(f.back());
  }
  HitResult out;
  if (f.empty() || !path_box.overlaps(feature_box, buffer_m)) return out;
  const bool polygon = feature.kind == GeometryKind::kPolygon;

  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const Vec2 a = p[i];
    const Vec2 b = p[i + 1];
    std::optional<Vec2> where;
    if (polygon && inside_even_odd(a, f)) {
      where = a;
    } else if (polygon && inside_even_odd(b, f)) {
      where = b;
    } else {
      double best = std::numeric_limits<double>::infinity();
      const std::size_t edges = f.size() == 1 ? 1 : f.size() - 1;
      for (std::size_t k = 0; k < edges; ++k) {
        const auto c = segment_distance(a, b, f[k], f[std::min(k + 1, f.size() - 1)]);
        if (c.dist <= buffer_m && c.dist < best) {
          best = c.dist;
          where = c.on_path;
          if (best == 0.0) break;
        }
      }
    }
    if (where) {
      out.hit = true;
      out.locations.push_back(proj.to_geo(*where));
    }
  }
  return out;
}

GroundTruthLabel label_leg(const Leg& leg, const FeatureSet& fs, const OracleBuffers& buffers) {
  GroundTruthLabel label;
  label.leg_id = leg.id;
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    const auto cls = kQuestions[q].cls;
    for (const auto& f : fs.features) {
      if (f.cls != cls) continue;
      if (polyline_hits(leg.path, f, buffers.of(cls)).hit) label.evidence[q].push_back(f.id);
    }
    label.answers[q] = !label.evidence[q].empty();
  }
  return label;
}

std::map<std::string, GroundTruthLabel> parse_annotations(std::string_view text) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::kMalformedAnnotation, what); };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("not JSON: ") + e.what());
  }
  if (!doc.is_array()) throw bad("expected an array of tasks");

  std::map<std::string, GroundTruthLabel> out;
  for (std::size_t t = 0; t < doc.size(); ++t) {
    const auto& task = doc[t];
    const std::string where = "task " + std::to_string(t);
    if (!task.is_object() || !task.contains("data") || !task.contains("annotations")) {
      throw bad(where + ": missing data or annotations");
    }
    const auto& data = task["data"];
    std::string leg_id;
    if (data.contains("leg_id") && data["leg_id"].is_string()) {
      leg_id = data["leg_id"].get<std::string>();
    } else if (data.contains("image") && data["image"].is_string()) {
      leg_id = std::filesystem::path(data["image"].get<std::string>()).stem().string();
    }
    if (leg_id.empty()) throw bad(where + ": no leg id");
    const auto& anns = task["annotations"];
    if (!anns.is_array() || anns.empty() || !anns[0].contains("result") || !anns[0]["result"].is_array()) {
      throw bad(where + ": no annotation result");
    }
    const std::string task_ref =
        "task/" + (task.contains("id") ? task["id"].dump() : std::to_string(t));

    GroundTruthLabel label;
    label.leg_id = leg_id;
    std::array<bool, kQuestionCount> seen{};
    for (const auto& r : anns[0]["result"]) {
      const auto name = r.value("from_name", std::string{});
      const auto q = std::find_if(kQuestions.begin(), kQuestions.end(), [&](const Question& x) { return x.key == name; });
      if (q == kQuestions.end()) throw bad(where + ": unknown question '" + name + "'");
      const auto qi = static_cast<std::size_t>(q - kQuestions.begin());
      if (seen[qi]) throw bad(where + ": question " + name + " answered twice");
      if (!r.contains("value") || !r["value"].contains("choices") || !r["value"]["choices"].is_array() ||
          r["value"]["choices"].size() != 1 || !r["value"]["choices"][0].is_string()) {
        throw bad(where + ": " + name + " needs exactly one choice");
      }
      const auto answer = normalize_answer(r["value"]["choices"][0].get<std::string>());
      if (!answer) throw bad(where + ": unrecognised choice for " + name);
      seen[qi] = true;
      label.answers[qi] = *answer;
      if (*answer) label.evidence[qi].push_back(task_ref);
    }
    for (std::size_t q = 0; q < kQuestionCount; ++q) {
      if (!seen[q]) throw bad(where + ": missing answer to " + std::string(kQuestions[q].key));
    }
    if (!out.emplace(leg_id, std::move(label)).second) throw bad(where + ": duplicate leg id " + leg_id);
  }
  return out;
}

std::map<std::string, GroundTruthLabel> import_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_file(path));
}

}  // namespace lastmile
