#pragma once

// Planar geometry over an equirectangular tangent plane centred on the study
// circle. Distances in meters, areas in square meters.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "cartoprompt/errors.hpp"

namespace cartoprompt::geo {

inline constexpr double kEarthRadiusM = 6371008.8;
inline constexpr double kMaxRadiusM = 5000.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

struct XY {
  double x = 0.0;  // meters east of the circle center
  double y = 0.0;  // meters north of the circle center

  friend bool operator==(const XY&, const XY&) = default;
};

inline XY operator-(XY a, XY b) { return {a.x - b.x, a.y - b.y}; }
inline XY operator+(XY a, XY b) { return {a.x + b.x, a.y + b.y}; }
inline XY operator*(double s, XY a) { return {s * a.x, s * a.y}; }
inline double dot(XY a, XY b) { return a.x * b.x + a.y * b.y; }
inline double cross(XY a, XY b) { return a.x * b.y - a.y * b.x; }
inline double norm(XY a) { return std::hypot(a.x, a.y); }

// Rings are stored closed: front() == back().
template <typename P>
using Ring = std::vector<P>;

template <typename P>
using Polyline = std::vector<P>;

template <typename P>
struct Polygon {
  Ring<P> outer;
  std::vector<Ring<P>> holes;

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct CircleSpec {
  LatLon center;
  double radius_m = 300.0;

  void validate() const {
    if (!(radius_m > 0.0 && radius_m <= kMaxRadiusM))
      throw ConfigError("circle radius must be in (0, 5000] m");
    if (!(center.lat >= -90.0 && center.lat <= 90.0 && center.lon >= -180.0 && center.lon <= 180.0))
      throw ConfigError("circle center outside WGS84 range");
  }

  double true_area() const { return std::numbers::pi * radius_m * radius_m; }
};

struct GeoConfig {
  double earth_radius_m = kEarthRadiusM;
  int ngon_segments = 64;

  void validate() const {
    if (ngon_segments < 16 || ngon_segments % 2 != 0)
      throw ConfigError("ngon_segments must be even and >= 16");
  }
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

inline XY project_local(const LatLon& center, const LatLon& p, double earth_radius_m = kEarthRadiusM) {
  const double cos0 = std::cos(deg2rad(center.lat));
  return {earth_radius_m * cos0 * deg2rad(p.lon - center.lon), earth_radius_m * deg2rad(p.lat - center.lat)};
}

inline XY project_local(const CircleSpec& circle, const LatLon& p, double earth_radius_m = kEarthRadiusM) {
  return project_local(circle.center, p, earth_radius_m);
}

inline LatLon unproject_local(const LatLon& center, const XY& q, double earth_radius_m = kEarthRadiusM) {
  const double cos0 = std::cos(deg2rad(center.lat));
  return {center.lat + rad2deg(q.y / earth_radius_m), center.lon + rad2deg(q.x / (earth_radius_m * cos0))};
}

inline double haversine(const LatLon& a, const LatLon& b, double earth_radius_m = kEarthRadiusM) {
  const double phi1 = deg2rad(a.lat), phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlam = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlam / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  if (h <= 0.5) return 2.0 * earth_radius_m * std::asin(std::sqrt(h));
  // asin loses precision near antipodes; the atan2 form stays well conditioned there.
  const double y1 = std::cos(phi2) * std::sin(dlam);
  const double y2 = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlam);
  const double x = std::sin(phi1) * std::sin(phi2) + std::cos(phi1) * std::cos(phi2) * std::cos(dlam);
  return earth_radius_m * std::atan2(std::hypot(y1, y2), x);
}

template <typename P, typename F>
std::vector<XY> project_all(const std::vector<P>& pts, F&& proj) {
  std::vector<XY> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(proj(p));
  return out;
}

// Signed shoelace area over a closed ring; positive for counter-clockwise.
inline double signed_ring_area(const Ring<XY>& ring) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) s += cross(ring[i], ring[i + 1]);
  return 0.5 * s;
}

inline void require_ring(const Ring<XY>& ring) {
  if (ring.size() < 4) throw DegenerateGeometryError("ring has fewer than 4 vertices");
  if (!(ring.front() == ring.back())) throw DegenerateGeometryError("ring is not closed");
}

inline double ring_area(const Ring<XY>& ring) {
  require_ring(ring);
  return std::abs(signed_ring_area(ring));
}

inline double polygon_area(const Polygon<XY>& poly) {
  double a = ring_area(poly.outer);
  for (const auto& h : poly.holes) a -= ring_area(h);
  return std::max(0.0, a);
}

inline double polyline_length(const Polyline<XY>& line) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) len += norm(line[i + 1] - line[i]);
  return len;
}

// Regular n-gon inscribed in the circle, centred at the origin, counter-clockwise, closed.
inline Ring<XY> circle_ngon(double radius_m, const GeoConfig& cfg = {}) {
  cfg.validate();
  const int n = cfg.ngon_segments;
  Ring<XY> ring;
  ring.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n;
    ring.push_back({radius_m * std::cos(t), radius_m * std::sin(t)});
  }
  ring.push_back(ring.front());
  return ring;
}

inline Ring<XY> circle_ngon(const CircleSpec& circle, const GeoConfig& cfg = {}) {
  circle.validate();
  return circle_ngon(circle.radius_m, cfg);
}

// Length of the parts of `line` inside (or on) the circle of radius r around the origin.
inline double clip_polyline_circle(const Polyline<XY>& line, double r) {
  double total = 0.0;
  const double r2 = r * r;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const XY p = line[i];
    const XY d = line[i + 1] - p;
    const double a = dot(d, d);
    if (a == 0.0) continue;
    const double b = 2.0 * dot(p, d);
    const double c = dot(p, p) - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    const double t0 = std::max(0.0, (-b - sq) / (2.0 * a));
    const double t1 = std::min(1.0, (-b + sq) / (2.0 * a));
    if (t1 > t0) total += (t1 - t0) * std::sqrt(a);
  }
  return total;
}

namespace detail {

// One Sutherland-Hodgman pass: keep the part of `subject` left of edge a->b.
inline std::vector<XY> clip_half_plane(const std::vector<XY>& subject, XY a, XY b) {
  std::vector<XY> out;
  if (subject.empty()) return out;
  out.reserve(subject.size() + 2);
  const XY e = b - a;
  auto side = [&](XY p) { return cross(e, p - a); };
  XY prev = subject.back();
  double sprev = side(prev);
  for (const XY& cur : subject) {
    const double scur = side(cur);
    if (scur >= 0.0) {
      if (sprev < 0.0) out.push_back(prev + (sprev / (sprev - scur)) * (cur - prev));
      out.push_back(cur);
    } else if (sprev >= 0.0) {
      out.push_back(prev + (sprev / (sprev - scur)) * (cur - prev));
    }
    prev = cur;
    sprev = scur;
  }
  return out;
}

// Shoelace over an open vertex list.
inline double open_area(const std::vector<XY>& pts) {
  if (pts.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) s += cross(pts[i], pts[(i + 1) % pts.size()]);
  return std::abs(0.5 * s);
}

}  // namespace detail

// Area of `ring` inside the convex, counter-clockwise `clip` ring.
inline double clipped_ring_area(const Ring<XY>& ring, const Ring<XY>& clip) {
  require_ring(ring);
  std::vector<XY> poly(ring.begin(), ring.end() - 1);
  for (std::size_t i = 0; i + 1 < clip.size() && !poly.empty(); ++i)
    poly = detail::clip_half_plane(poly, clip[i], clip[i + 1]);
  return detail::open_area(poly);
}

inline double intersection_area(const Polygon<XY>& poly, const Ring<XY>& convex_clip) {
  require_ring(convex_clip);
  double a = clipped_ring_area(poly.outer, convex_clip);
  for (const auto& h : poly.holes) a -= clipped_ring_area(h, convex_clip);
  return std::max(0.0, a);
}

struct BBox {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  bool intersects(const BBox& o) const {
    return !(o.min_x > max_x || o.max_x < min_x || o.min_y > max_y || o.max_y < min_y);
  }
};

template <typename P, typename GetX, typename GetY>
BBox bbox_of(const std::vector<P>& pts, GetX gx, GetY gy) {
  BBox b{gx(pts.front()), gy(pts.front()), gx(pts.front()), gy(pts.front())};
  for (const auto& p : pts) {
    b.min_x = std::min(b.min_x, gx(p));
    b.max_x = std::max(b.max_x, gx(p));
    b.min_y = std::min(b.min_y, gy(p));
    b.max_y = std::max(b.max_y, gy(p));
  }
  return b;
}

// Even-odd point-in-ring test.
template <typename P, typename GetX, typename GetY>
bool point_in_ring(const Ring<P>& ring, double px, double py, GetX gx, GetY gy) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const double xi = gx(ring[i]), yi = gy(ring[i]);
    const double xj = gx(ring[j]), yj = gy(ring[j]);
    if (((yi > py) != (yj > py)) && (px < (xj - xi) * (py - yi) / (yj - yi) + xi)) inside = !inside;
  }
  return inside;
}

inline bool point_in_ring(const Ring<XY>& ring, XY p) {
  return point_in_ring(ring, p.x, p.y, [](const XY& q) { return q.x; }, [](const XY& q) { return q.y; });
}

}  // namespace cartoprompt::geo
