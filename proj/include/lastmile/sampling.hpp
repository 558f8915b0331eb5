#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lastmile/geo.hpp"

namespace lastmile {

// Partition of `points` into K non-empty, disjoint clusters.
struct Clustering {
  std::vector<GeoPoint> points;
  std::vector<std::size_t> assignment;  // point index -> cluster index
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;

  // Point indices per cluster, ascending.
  std::vector<std::vector<std::size_t>> members() const;
};

struct SampleConfig {
  std::size_t m = 1;  // clusters selected in stage I
  std::size_t n_min = 10;
  std::size_t n_max = 20;
  std::size_t per_cluster_cap = 20;
  std::uint64_t seed = 0;
};

struct StopSet {
  GeoPoint depot;
  std::vector<GeoPoint> stops;
  std::vector<int> demands;
  int capacity = 0;
  std::uint64_t seed = 0;

  int total_demand() const;
};

// Road polylines with every segment subdivided into ceil(len / spacing)
// equal parts. Original vertices are kept, so junctions survive.
FeatureSet densify_roads(const FeatureSet& fs, double spacing_m);

// Points of densify_roads in feature order then arc length, exact
// duplicates removed (first occurrence wins).
std::vector<GeoPoint> densify(const FeatureSet& fs, double spacing_m);

inline constexpr std::size_t kKMeansMaxIterations = 100;
inline constexpr double kKMeansToleranceM = 1.0;

// Seeded k-means (k-means++ initialisation) in local equirectangular meters.
Clustering cluster_points(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed);

// Stage I picks cfg.m clusters uniformly without replacement; the depot is
// then drawn from one of them; stage II draws n_k stops per selected cluster
// with n_k <= min(cap, available) and n_min <= sum n_k <= n_max.
// Unit demands; capacity = 10 * n.
StopSet two_stage_sample(const Clustering& c, const SampleConfig& cfg);

}  // namespace lastmile
