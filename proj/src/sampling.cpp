#include "lastmile/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "lastmile/distance.hpp"
#include "lastmile/error.hpp"
#include "lastmile/projection.hpp"
#include "lastmile/rng.hpp"

namespace lastmile {

std::vector<std::vector<std::size_t>> Clustering::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
  return out;
}

int StopSet::total_demand() const { return std::accumulate(demands.begin(), demands.end(), 0); }

FeatureSet densify_roads(const FeatureSet& fs, double spacing_m) {
  if (!(spacing_m > 0.0)) throw Error(ErrorCode::kInvalidArgument, "spacing must be positive");
  FeatureSet out;
  out.extent = fs.extent;
  for (const auto& f : fs.features) {
    if (f.cls != FeatureClass::kRoad || f.points.empty()) continue;
    Feature d = f;
    d.points.clear();
    d.points.push_back(f.points.front());
    for (std::size_t i = 0; i + 1 < f.points.size(); ++i) {
      const GeoPoint a = f.points[i];
      const GeoPoint b = f.points[i + 1];
      const double len = haversine(a, b);
      if (len <= 0.0) continue;
      const auto parts = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / spacing_m)));
      for (std::size_t k = 1; k < parts; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(parts);
        d.points.push_back({a.lat + (b.lat - a.lat) * t, a.lon + (b.lon - a.lon) * t});
      }
      d.points.push_back(b);
    }
    out.features.push_back(std::move(d));
  }
  if (out.features.empty()) throw Error(ErrorCode::kNoRoads, "nothing to densify");
  return out;
}

std::vector<GeoPoint> densify(const FeatureSet& fs, double spacing_m) {
  const auto roads = densify_roads(fs, spacing_m);
  struct Hash {
    std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const noexcept {
      return std::hash<std::uint64_t>{}(k.first * 0x9E3779B97F4A7C15ULL ^ k.second);
    }
  };
  std::unordered_set<std::pair<std::uint64_t, std::uint64_t>, Hash> seen;
  std::vector<GeoPoint> out;
  for (const auto& f : roads.features) {
    for (const auto& p : f.points) {
      // +0.0 folds -0.0 so equal coordinates hash equal.
      if (seen.emplace(std::bit_cast<std::uint64_t>(p.lat + 0.0), std::bit_cast<std::uint64_t>(p.lon + 0.0)).second) {
        out.push_back(p);
      }
    }
  }
  return out;
}

namespace {

double dist2(Vec2 a, Vec2 b) {
  const Vec2 d = a - b;
  return d.x * d.x + d.y * d.y;
}

std::size_t nearest(const std::vector<Vec2>& centers, Vec2 p) {
  std::size_t best = 0;
  double best_d = dist2(centers[0], p);
  for (std::size_t c = 1; c < centers.size(); ++c) {
    const double d = dist2(centers[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Vec2> kmeans_pp(const std::vector<Vec2>& xy, std::size_t k, Rng& rng) {
  const std::size_t n = xy.size();
  std::vector<Vec2> centers;
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  centers.push_back(xy[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(xy[i], centers[0]);
  while (centers.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > r) break;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a center.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    chosen[pick] = true;
    centers.push_back(xy[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], dist2(xy[i], xy[pick]));
  }
  return centers;
}

// Moves the farthest point of the largest cluster into each empty cluster.
void repair_empty(const std::vector<Vec2>& xy, std::vector<Vec2>& centers, std::vector<std::size_t>& assign) {
  const std::size_t k = centers.size();
  std::vector<std::size_t> size(k, 0);
  for (auto a : assign) ++size[a];
  for (std::size_t e = 0; e < k; ++e) {
    if (size[e] != 0) continue;
    const auto largest = static_cast<std::size_t>(std::max_element(size.begin(), size.end()) - size.begin());
    std::size_t far = xy.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < xy.size(); ++i) {
      if (assign[i] != largest) continue;
      const double d = dist2(xy[i], centers[largest]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    assign[far] = e;
    --size[largest];
    size[e] = 1;
    centers[e] = xy[far];
  }
}

}  // namespace

Clustering cluster_points(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "K must be at least 1");
  if (points.size() < k) {
    throw Error(ErrorCode::kTooFewPoints,
                std::to_string(points.size()) + " points for " + std::to_string(k) + " clusters");
  }
  const std::size_t n = points.size();
  GeoPoint origin{0.0, 0.0};
  for (const auto& p : points) {
    origin.lat += p.lat;
    origin.lon += p.lon;
  }
  origin.lat /= static_cast<double>(n);
  origin.lon /= static_cast<double>(n);
  const LocalProjection proj(origin);
  std::vector<Vec2> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = proj.to_xy(points[i]);

  Rng rng(seed);
  auto centers = kmeans_pp(xy, k, rng);
  std::vector<std::size_t> assign(n, 0);
  std::size_t iter = 0;
  while (iter < kKMeansMaxIterations) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(centers, xy[i]);
    repair_empty(xy, centers, assign);

    std::vector<Vec2> sum(k);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] = sum[assign[i]] + xy[i];
      ++count[assign[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const Vec2 next = sum[c] * (1.0 / static_cast<double>(count[c]));
      shift = std::max(shift, norm(next - centers[c]));
      centers[c] = next;
    }
    if (shift < kKMeansToleranceM) break;
  }

  Clustering out;
  out.points.assign(points.begin(), points.end());
  out.assignment = std::move(assign);
  out.k = k;
  out.seed = seed;
  out.iterations = iter;
  return out;
}

StopSet two_stage_sample(const Clustering& c, const SampleConfig& cfg) {
  if (cfg.m < 1 || cfg.m > c.k) throw Error(ErrorCode::kInvalidArgument, "need 1 <= m <= K");
  if (cfg.n_min < 1 || cfg.n_min > cfg.n_max) throw Error(ErrorCode::kInvalidArgument, "need 1 <= n_min <= n_max");
  if (cfg.per_cluster_cap < 1) throw Error(ErrorCode::kInvalidArgument, "per_cluster_cap must be positive");

  Rng rng(cfg.seed);
  const auto members = c.members();

  // Stage I: S, |S| = m, uniformly without replacement.
  std::vector<std::size_t> order(c.k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < cfg.m; ++i) std::swap(order[i], order[i + rng.below(c.k - i)]);
  const std::vector<std::size_t> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.m));

  const std::size_t depot_cluster = selected[rng.below(cfg.m)];
  const auto& depot_members = members[depot_cluster];
  const std::size_t depot_index = depot_members[rng.below(depot_members.size())];

  std::vector<std::vector<std::size_t>> pools;
  std::vector<std::size_t> avail;
  std::size_t total_avail = 0;
  for (auto k : selected) {
    auto pool = members[k];
    std::erase(pool, depot_index);
    avail.push_back(std::min(cfg.per_cluster_cap, pool.size()));
    total_avail += avail.back();
    pools.push_back(std::move(pool));
  }
  if (total_avail < cfg.n_min) {
    throw Error(ErrorCode::kInfeasible, "selected clusters offer " + std::to_string(total_avail) +
                                            " stops, need at least " + std::to_string(cfg.n_min));
  }

  // Stage II sizes: n_k <= min(cap, |C_k|), n_min <= sum <= n_max.
  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(cfg.n_min), static_cast<std::int64_t>(std::min(cfg.n_max, total_avail))));
  std::vector<std::size_t> n_k(cfg.m, 0);
  std::size_t assigned = 0;
  if (n >= cfg.m) {
    for (std::size_t s = 0; s < cfg.m; ++s) {
      if (avail[s] > 0) {
        n_k[s] = 1;
        ++assigned;
      }
    }
  }
  while (assigned < n) {
    std::vector<std::size_t> open;
    for (std::size_t s = 0; s < cfg.m; ++s) {
      if (n_k[s] < avail[s]) open.push_back(s);
    }
    ++n_k[open[rng.below(open.size())]];
    ++assigned;
  }

  StopSet out;
  out.depot = c.points[depot_index];
  out.seed = cfg.seed;
  std::vector<GeoPoint> taken{out.depot};
  auto far_enough = [&taken](const GeoPoint& p) {
    return std::all_of(taken.begin(), taken.end(),
                       [&p](const GeoPoint& q) { return haversine(p, q) >= kDuplicateNodeThresholdM; });
  };
  for (std::size_t s = 0; s < cfg.m; ++s) {
    auto& pool = pools[s];
    std::size_t drawn = 0;
    for (std::size_t i = 0; i < pool.size() && drawn < n_k[s]; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      const auto& p = c.points[pool[i]];
      if (!far_enough(p)) continue;
      taken.push_back(p);
      out.stops.push_back(p);
      ++drawn;
    }
    if (drawn < n_k[s]) {
      throw Error(ErrorCode::kInfeasible, "cluster " + std::to_string(selected[s]) + " ran out of distinct points");
    }
  }
  out.demands.assign(out.stops.size(), 1);
  out.capacity = 10 * static_cast<int>(out.stops.size());
  return out;
}

}  // namespace lastmile
