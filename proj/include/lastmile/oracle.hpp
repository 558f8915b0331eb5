#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lastmile/geo.hpp"
#include "lastmile/router.hpp"

namespace lastmile {

inline constexpr std::size_t kQuestionCount = 4;

struct Question {
  std::string_view key;   // "q1".."q4"
  std::string_view text;  // asked verbatim
  FeatureClass cls;       // geometry that makes the answer "yes"
};

inline constexpr std::array<Question, kQuestionCount> kQuestions{{
    {"q1", "Does any of the routes cross a water body ?", FeatureClass::kWater},
    {"q2", "Does it pass through a railway-crossing / railway line ?", FeatureClass::kRailway},
    {"q3", "Does it pass through pedestrian area ?", FeatureClass::kPedestrian},
    {"q4", "Does the route pass through a park or forested area ?", FeatureClass::kParkForest},
}};

using Answers = std::array<bool, kQuestionCount>;

struct GroundTruthLabel {
  std::string leg_id;
  Answers answers{};
  // Ids of the features (or annotation tasks) behind each "yes".
  std::array<std::vector<std::string>, kQuestionCount> evidence;

  friend bool operator==(const GroundTruthLabel&, const GroundTruthLabel&) = default;
};

struct OracleBuffers {
  double water_m = 0.0;
  double railway_m = 5.0;
  double pedestrian_m = 0.0;
  double park_forest_m = 0.0;

  double of(FeatureClass c) const;
  friend bool operator==(const OracleBuffers&, const OracleBuffers&) = default;
};

struct HitResult {
  bool hit = false;
  std::vector<GeoPoint> locations;  // one per path segment that hits
};

// True iff some path segment meets the feature dilated by `buffer_m`.
// Polylines: segment-to-segment distance <= buffer. Polygons: segment within
// buffer of the boundary, or an endpoint inside by the even-odd rule.
// Computed in equirectangular meters centred on the path's bounding box.
HitResult polyline_hits(std::span<const GeoPoint> path, const Feature& feature, double buffer_m);

GroundTruthLabel label_leg(const Leg& leg, const FeatureSet& fs, const OracleBuffers& buffers = {});

// Annotation-tool JSON export: an array of tasks, each with one annotation
// whose result holds a "choices" answer for each of q1..q4. The leg id is
// data.leg_id, falling back to the image file stem.
std::map<std::string, GroundTruthLabel> import_annotations(const std::filesystem::path& path);
std::map<std::string, GroundTruthLabel> parse_annotations(std::string_view text);

}  // namespace lastmile
