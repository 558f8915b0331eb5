#pragma once

#include <cmath>
#include <numbers>

#include "lastmile/geo.hpp"

namespace lastmile {

inline constexpr double kEarthRadiusM = 6'371'008.8;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Equirectangular projection to local meters around an origin. Accurate to
// well under 0.1% over a city-sized area.
class LocalProjection {
 public:
  explicit LocalProjection(GeoPoint origin)
      : origin_(origin), cos_lat_(std::cos(origin.lat * kDegToRad)) {}

  Vec2 to_xy(const GeoPoint& p) const {
    return {(p.lon - origin_.lon) * kDegToRad * kEarthRadiusM * cos_lat_,
            (p.lat - origin_.lat) * kDegToRad * kEarthRadiusM};
  }

  GeoPoint to_geo(const Vec2& v) const {
    return {origin_.lat + v.y / (kDegToRad * kEarthRadiusM),
            origin_.lon + v.x / (kDegToRad * kEarthRadiusM * cos_lat_)};
  }

  const GeoPoint& origin() const noexcept { return origin_; }

 private:
  GeoPoint origin_;
  double cos_lat_;
};

}  // namespace lastmile
