#include "lastmile/render.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lastmile/digest.hpp"
#include "lastmile/error.hpp"
#include "lastmile/serialize.hpp"

namespace lastmile {

Rgb parse_hex_color(std::string_view hex) {
  auto bad = [&] { return Error(ErrorCode::kInvalidArgument, "bad colour '" + std::string(hex) + "'"); };
  if (hex.size() != 7 || hex[0] != '#') throw bad();
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw bad();
  };
  auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(nibble(hex[i]) * 16 + nibble(hex[i + 1])); };
  return {byte(1), byte(3), byte(5)};
}

std::string to_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", c.r, c.g, c.b);
  return buf;
}

int channel_distance(Rgb a, Rgb b) {
  return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

StyleSheet default_style() {
  StyleSheet s;
  s.of(FeatureClass::kRoad) = {{0xFF, 0xFF, 0xFF}, {0xFF, 0xFF, 0xFF}, 5.0};
  s.of(FeatureClass::kWater) = {{0xAA, 0xD3, 0xDF}, {0xAA, 0xD3, 0xDF}, 4.0};
  s.of(FeatureClass::kRailway) = {{0x70, 0x70, 0x70}, {0x70, 0x70, 0x70}, 2.0};
  s.of(FeatureClass::kPedestrian) = {{0xDD, 0xDD, 0xE8}, {0xC4, 0xC4, 0xD6}, 3.0};
  s.of(FeatureClass::kParkForest) = {{0xAD, 0xD1, 0x9E}, {0xAD, 0xD1, 0x9E}, 1.0};
  return s;
}

void check_style(const StyleSheet& style) {
  auto near = [&](Rgb c) { return channel_distance(style.route, c) < kMinRouteColorDistance; };
  if (near(style.background)) throw Error(ErrorCode::kInvalidArgument, "route colour too close to background");
  for (auto c : kAllFeatureClasses) {
    if (near(style.of(c).fill) || near(style.of(c).stroke)) {
      throw Error(ErrorCode::kInvalidArgument, "route colour too close to " + std::string(to_string(c)));
    }
  }
  if (!(style.route_width_px > 0.0) || !(style.marker_radius_px >= 0.0) || style.label_font_px < 5) {
    throw Error(ErrorCode::kInvalidArgument, "route width, marker radius or font size out of range");
  }
}

std::string style_digest(const StyleSheet& style) { return sha256_hex(json(style).dump()); }

namespace {

constexpr double kMercatorRadius = 6378137.0;
constexpr double kMaxMercatorLat = 85.05112878;
// Smallest viewport side, for legs that are a single point.
constexpr double kMinViewportM = 100.0;

}  // namespace

Vec2 web_mercator(const GeoPoint& p) {
  const double lat = std::clamp(p.lat, -kMaxMercatorLat, kMaxMercatorLat) * kDegToRad;
  return {kMercatorRadius * p.lon * kDegToRad, kMercatorRadius * std::log(std::tan(std::numbers::pi / 4 + lat / 2))};
}

GeoPoint inverse_web_mercator(const Vec2& m) {
  const double lat = 2 * std::atan(std::exp(m.y / kMercatorRadius)) - std::numbers::pi / 2;
  return {lat / kDegToRad, m.x / kMercatorRadius / kDegToRad};
}

Georeference Georeference::fit(const BoundingBox& box, double pad, int size_px) {
  const Vec2 lo = web_mercator({box.min_lat, box.min_lon});
  const Vec2 hi = web_mercator({box.max_lat, box.max_lon});
  const double side = std::max({hi.x - lo.x, hi.y - lo.y, kMinViewportM});
  const double total = side * (1 + 2 * pad);
  const double cx = (lo.x + hi.x) / 2;
  const double cy = (lo.y + hi.y) / 2;
  return Georeference(cx - total / 2, cy + total / 2, total / size_px, size_px, size_px);
}

Vec2 Georeference::to_pixel(const GeoPoint& p) const {
  const Vec2 m = web_mercator(p);
  return {(m.x - left_m_) / mpp_, (top_m_ - m.y) / mpp_};
}

GeoPoint Georeference::to_geo(const Vec2& px) const {
  return inverse_web_mercator({left_m_ + px.x * mpp_, top_m_ - px.y * mpp_});
}

std::size_t RenderedImage::count(Rgb c) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 2 < rgb.size(); i += 3) {
    if (rgb[i] == c.r && rgb[i + 1] == c.g && rgb[i + 2] == c.b) ++n;
  }
  return n;
}

namespace {

// Pixel (x, y) is covered when its centre (x + .5, y + .5) is.
class Canvas {
 public:
  Canvas(RenderedImage& img) : img_(img) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    const auto i = (static_cast<std::size_t>(y) * img_.width + x) * 3;
    img_.rgb[i] = c.r;
    img_.rgb[i + 1] = c.g;
    img_.rgb[i + 2] = c.b;
  }

  void fill(Rgb c) {
    for (int y = 0; y < img_.height; ++y) {
      for (int x = 0; x < img_.width; ++x) set(x, y, c);
    }
  }

  // Even-odd scanline fill.
  void polygon(const std::vector<Vec2>& ring, Rgb c) {
    if (ring.size() < 3) return;
    double min_y = ring[0].y;
    double max_y = ring[0].y;
    for (const auto& p : ring) {
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
    const int y1 = std::min(img_.height - 1, static_cast<int>(std::ceil(max_y)));
    std::vector<double> xs;
    for (int y = y0; y <= y1; ++y) {
      const double sy = y + 0.5;
      xs.clear();
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const Vec2 a = ring[i];
        const Vec2 b = ring[(i + 1) % ring.size()];
        if ((a.y <= sy) != (b.y <= sy)) xs.push_back(a.x + (sy - a.y) * (b.x - a.x) / (b.y - a.y));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        const int xa = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
        const int xb = std::min(img_.width - 1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
        for (int x = xa; x <= xb; ++x) set(x, y, c);
      }
    }
  }

  // Pixels whose centre lies within width/2 of the segment.
  void segment(Vec2 a, Vec2 b, double width, Rgb c) {
    const double r = std::max(width / 2, 0.5);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
    const int x1 = std::min(img_.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
    const int y1 = std::min(img_.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
    const Vec2 d = b - a;
    const double len2 = dot(d, d);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p{x + 0.5, y + 0.5};
        double t = len2 > 0 ? dot(p - a, d) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        if (norm(p - (a + d * t)) <= r) set(x, y, c);
      }
    }
  }

  void polyline(const std::vector<Vec2>& pts, double width, Rgb c) {
    if (pts.size() == 1) segment(pts[0], pts[0], width, c);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) segment(pts[i], pts[i + 1], width, c);
  }

  // Two parallel rails with cross ties every `spacing` px of arc length.
  void railway(const std::vector<Vec2>& pts, double width, Rgb c) {
    const double offset = std::max(2.0, width * 1.5);
    const double spacing = 8.0;
    double carried = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Vec2 a = pts[i];
      const Vec2 b = pts[i + 1];
      const double len = norm(b - a);
      if (len <= 0.0) continue;
      const Vec2 u = (b - a) * (1.0 / len);
      const Vec2 n{-u.y, u.x};
      segment(a + n * offset, b + n * offset, 1.0, c);
      segment(a - n * offset, b - n * offset, 1.0, c);
      double s = spacing - carried;
      while (s <= len) {
        const Vec2 m = a + u * s;
        segment(m + n * (offset + 1), m - n * (offset + 1), 1.0, c);
        s += spacing;
      }
      carried = len - (s - spacing);
    }
  }

  void disc(Vec2 centre, double radius, Rgb c) { segment(centre, centre, 2 * radius, c); }

  void square(Vec2 centre, double half, Rgb c) {
    const int x0 = static_cast<int>(std::ceil(centre.x - half - 0.5));
    const int x1 = static_cast<int>(std::floor(centre.x + half - 0.5));
    const int y0 = static_cast<int>(std::ceil(centre.y - half - 0.5));
    const int y1 = static_cast<int>(std::floor(centre.y + half - 0.5));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) set(x, y, c);
    }
  }

  // 3x5 digits, `scale` px per cell, centred on `centre`.
  void text(const std::string& s, Vec2 centre, int scale, Rgb c) {
    static constexpr std::uint16_t kGlyphs[10] = {
        0b111'101'101'101'111, 0b010'110'010'010'111, 0b111'001'111'100'111, 0b111'001'111'001'111,
        0b101'101'111'001'001, 0b111'100'111'001'111, 0b111'100'111'101'111, 0b111'001'010'010'010,
        0b111'101'111'101'111, 0b111'101'111'001'111,
    };
    const int advance = 4 * scale;
    const int total = static_cast<int>(s.size()) * advance - scale;
    const int left = static_cast<int>(std::lround(centre.x - total / 2.0));
    const int top = static_cast<int>(std::lround(centre.y - 2.5 * scale));
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] < '0' || s[k] > '9') continue;
      const auto glyph = kGlyphs[s[k] - '0'];
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if (!(glyph >> (14 - (row * 3 + col)) & 1)) continue;
          for (int dy = 0; dy < scale; ++dy) {
            for (int dx = 0; dx < scale; ++dx) {
              set(left + static_cast<int>(k) * advance + col * scale + dx, top + row * scale + dy, c);
            }
          }
        }
      }
    }
  }

 private:
  RenderedImage& img_;
};

constexpr Rgb kMarkerFill{0x1F, 0x3A, 0x93};
constexpr Rgb kMarkerText{0xFF, 0xFF, 0xFF};
constexpr Rgb kDepotFill{0x00, 0x00, 0x00};

constexpr FeatureClass kDrawOrder[] = {FeatureClass::kWater, FeatureClass::kParkForest, FeatureClass::kPedestrian,
                                       FeatureClass::kRailway, FeatureClass::kRoad};

void check_resolution(int resolution) {
  if (resolution < kMinResolution || resolution > kMaxResolution) {
    throw Error(ErrorCode::kResolutionOutOfRange, std::to_string(resolution) + " px outside [" +
                                                      std::to_string(kMinResolution) + ", " +
                                                      std::to_string(kMaxResolution) + "]");
  }
}

std::vector<Vec2> to_pixels(const Georeference& view, std::span<const GeoPoint> pts) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(view.to_pixel(p));
  return out;
}

void draw_route(Canvas& canvas, const Georeference& view, const Leg& leg, const StyleSheet& style) {
  canvas.polyline(to_pixels(view, leg.path), style.route_width_px, style.route);
}

void draw_marker(Canvas& canvas, RenderedImage& img, const Marker& m, const StyleSheet& style) {
  if (m.depot) {
    canvas.square(m.pixel, style.marker_radius_px * 0.8, kDepotFill);
  } else {
    canvas.disc(m.pixel, style.marker_radius_px, kMarkerFill);
    canvas.text(m.label, m.pixel, std::max(1, style.label_font_px / 5), kMarkerText);
  }
  img.markers.push_back(m);
}

BoundingBox legs_box(std::span<const Leg> legs) {
  std::vector<GeoPoint> pts;
  for (const auto& leg : legs) pts.insert(pts.end(), leg.path.begin(), leg.path.end());
  if (pts.empty()) throw Error(ErrorCode::kDegenerateGeometry, "nothing to render");
  return BoundingBox::of(pts);
}

}  // namespace

RenderedImage render_basemap(const FeatureSet& fs, const Georeference& view, const StyleSheet& style) {
  RenderedImage img;
  img.width = view.width();
  img.height = view.height();
  img.georef = view;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  Canvas canvas(img);
  canvas.fill(style.background);
  for (auto cls : kDrawOrder) {
    const auto& cs = style.of(cls);
    for (const auto& f : fs.features) {
      if (f.cls != cls) continue;
      const auto px = to_pixels(view, f.points);
      if (f.kind == GeometryKind::kPolygon) {
        canvas.polygon(px, cs.fill);
        canvas.polyline(px, cs.stroke_width_px, cs.stroke);
      } else if (cls == FeatureClass::kRailway) {
        canvas.railway(px, cs.stroke_width_px, cs.stroke);
      } else {
        canvas.polyline(px, cs.stroke_width_px, cs.stroke);
      }
    }
  }
  return img;
}

RenderedImage render_leg(const FeatureSet& fs, const Leg& leg, const StyleSheet& style, int resolution) {
  check_resolution(resolution);
  const Leg* one = &leg;
  const auto view = Georeference::fit(legs_box({one, 1}), kViewportPadding, resolution);
  auto img = render_basemap(fs, view, style);
  Canvas canvas(img);
  draw_route(canvas, view, leg, style);
  auto marker = [&](std::size_t stop, const GeoPoint& at) {
    return Marker{stop == 0 ? "" : std::to_string(stop), view.to_pixel(at), stop == 0};
  };
  draw_marker(canvas, img, marker(leg.from_stop, leg.path.front()), style);
  draw_marker(canvas, img, marker(leg.to_stop, leg.path.back()), style);
  return img;
}

RenderedImage render_plan(const FeatureSet& fs, std::span<const Leg> legs, const StyleSheet& style, int resolution) {
  check_resolution(resolution);
  const auto view = Georeference::fit(legs_box(legs), kViewportPadding, resolution);
  auto img = render_basemap(fs, view, style);
  Canvas canvas(img);
  for (const auto& leg : legs) draw_route(canvas, view, leg, style);
  bool depot_drawn = false;
  std::size_t visit = 0;
  for (const auto& leg : legs) {
    if (leg.from_stop == 0 && !depot_drawn) {
      draw_marker(canvas, img, {"", view.to_pixel(leg.path.front()), true}, style);
      depot_drawn = true;
    }
    if (leg.to_stop != 0) draw_marker(canvas, img, {std::to_string(++visit), view.to_pixel(leg.path.back()), false}, style);
  }
  return img;
}

namespace {

void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  auto be32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  be32(static_cast<std::uint32_t>(data.size()));
  const auto start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  be32(static_cast<std::uint32_t>(crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start))));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RenderedImage& img) {
  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  for (auto v : {img.width, img.height}) {
    for (int s = 24; s >= 0; s -= 8) ihdr.push_back(static_cast<std::uint8_t>(static_cast<std::uint32_t>(v) >> s));
  }
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, no interlace
  chunk(out, "IHDR", ihdr);

  const std::size_t row = static_cast<std::size_t>(img.width) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((row + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(y * row),
               img.rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * row));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error(ErrorCode::kIoError, "zlib compression failed");
  }
  packed.resize(packed_size);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", {});
  return out;
}

void write_png(const RenderedImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  write_file(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::string pixel_digest(const RenderedImage& img) { return sha256_hex(img.rgb); }

}  // namespace lastmile
