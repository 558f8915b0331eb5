#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lastmile/evaluation.hpp"
#include "lastmile/extraction.hpp"
#include "lastmile/geo.hpp"
#include "lastmile/llm_client.hpp"
#include "lastmile/oracle.hpp"
#include "lastmile/render.hpp"
#include "lastmile/router.hpp"
#include "lastmile/sampling.hpp"
#include "lastmile/vrp.hpp"

namespace lastmile {

using nlohmann::json;

void to_json(json& j, const GeoPoint& p);
void from_json(const json& j, GeoPoint& p);
void to_json(json& j, const BoundingBox& b);
void from_json(const json& j, BoundingBox& b);
void to_json(json& j, const Feature& f);
void from_json(const json& j, Feature& f);
void to_json(json& j, const FeatureSet& fs);
void from_json(const json& j, FeatureSet& fs);

void to_json(json& j, const StopSet& s);
void from_json(const json& j, StopSet& s);

void to_json(json& j, const RoutePlan& p);
void from_json(const json& j, RoutePlan& p);
void to_json(json& j, const Instance& inst);
void from_json(const json& j, Instance& inst);

void to_json(json& j, const Leg& leg);
void from_json(const json& j, Leg& leg);

void to_json(json& j, const StyleSheet& s);
void from_json(const json& j, StyleSheet& s);
void to_json(json& j, const OracleBuffers& b);
void from_json(const json& j, OracleBuffers& b);

void to_json(json& j, const GroundTruthLabel& l);
void from_json(const json& j, GroundTruthLabel& l);
void to_json(json& j, const Verdict& v);
void from_json(const json& j, Verdict& v);
void to_json(json& j, const RawResponse& r);
void from_json(const json& j, RawResponse& r);

void to_json(json& j, const ConfusionMatrix& cm);
void to_json(json& j, const Metrics& m);
void to_json(json& j, const ModelReport& r);

// Legs as a GeoJSON FeatureCollection of LineStrings.
json legs_to_geojson(std::span<const Leg> legs);
std::vector<Leg> legs_from_geojson(const json& j);

// One compact JSON object per line.
template <typename T>
std::string to_jsonl(std::span<const T> items) {
  std::string out;
  for (const auto& item : items) {
    out += json(item).dump();
    out += '\n';
  }
  return out;
}

template <typename T>
std::vector<T> from_jsonl(std::string_view text) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.push_back(json::parse(line).get<T>());
    pos = end + 1;
  }
  return out;
}

std::map<std::string, GroundTruthLabel> labels_by_leg(std::span<const GroundTruthLabel> labels);

}  // namespace lastmile
