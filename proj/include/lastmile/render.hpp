#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lastmile/geo.hpp"
#include "lastmile/projection.hpp"
#include "lastmile/router.hpp"

namespace lastmile {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// "#RRGGBB"
Rgb parse_hex_color(std::string_view hex);
std::string to_hex(Rgb c);
int channel_distance(Rgb a, Rgb b);  // max |channel difference|

struct ClassStyle {
  Rgb fill;
  Rgb stroke;
  double stroke_width_px = 1.0;
};

struct StyleSheet {
  Rgb background{0xF2, 0xEF, 0xE9};
  std::array<ClassStyle, 5> classes{};  // indexed by FeatureClass
  Rgb route{0xFF, 0x00, 0x00};
  double route_width_px = 3.0;
  double marker_radius_px = 9.0;
  int label_font_px = 10;

  const ClassStyle& of(FeatureClass c) const { return classes[static_cast<std::size_t>(c)]; }
  ClassStyle& of(FeatureClass c) { return classes[static_cast<std::size_t>(c)]; }
};

// OSM-carto-like palette.
StyleSheet default_style();

inline constexpr int kMinRouteColorDistance = 64;

// Throws kInvalidArgument if the route colour is within
// kMinRouteColorDistance of the background or any class colour.
void check_style(const StyleSheet& style);

// SHA-256 over the canonical JSON form.
std::string style_digest(const StyleSheet& style);

// Web Mercator (EPSG:3857) view: pixel (0,0) is the top-left corner of the
// top-left pixel, x grows east, y grows south.
class Georeference {
 public:
  Georeference() = default;
  Georeference(double left_m, double top_m, double meters_per_px, int width, int height)
      : left_m_(left_m), top_m_(top_m), mpp_(meters_per_px), width_(width), height_(height) {}

  // Square viewport covering `box` (degrees) with `pad` of its larger side
  // added on every edge.
  static Georeference fit(const BoundingBox& box, double pad, int size_px);

  Vec2 to_pixel(const GeoPoint& p) const;
  GeoPoint to_geo(const Vec2& px) const;

  double left_m() const noexcept { return left_m_; }
  double top_m() const noexcept { return top_m_; }
  double meters_per_px() const noexcept { return mpp_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

 private:
  double left_m_ = 0.0;
  double top_m_ = 0.0;
  double mpp_ = 1.0;
  int width_ = 0;
  int height_ = 0;
};

Vec2 web_mercator(const GeoPoint& p);
GeoPoint inverse_web_mercator(const Vec2& m);

struct Marker {
  std::string label;  // "" for the depot
  Vec2 pixel;
  bool depot = false;
};

struct RenderedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
  Georeference georef;
  std::vector<Marker> markers;

  Rgb at(int x, int y) const {
    const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  std::size_t count(Rgb c) const;
};

inline constexpr int kMinResolution = 256;
inline constexpr int kMaxResolution = 4096;
inline constexpr int kDefaultResolution = 1024;
inline constexpr double kViewportPadding = 0.20;

// Basemap only, in draw order Water, ParkForest, Pedestrian, Railway, Road.
RenderedImage render_basemap(const FeatureSet& fs, const Georeference& view, const StyleSheet& style);

// Basemap plus the leg in the route colour and markers at both ends.
RenderedImage render_leg(const FeatureSet& fs, const Leg& leg, const StyleSheet& style,
                         int resolution = kDefaultResolution);

// All legs of a plan; depot marker plus stops numbered in visit order.
RenderedImage render_plan(const FeatureSet& fs, std::span<const Leg> legs, const StyleSheet& style,
                          int resolution = kDefaultResolution);

std::vector<std::uint8_t> encode_png(const RenderedImage& img);
void write_png(const RenderedImage& img, const std::filesystem::path& path);

// SHA-256 of the raw pixel buffer.
std::string pixel_digest(const RenderedImage& img);

}  // namespace lastmile
