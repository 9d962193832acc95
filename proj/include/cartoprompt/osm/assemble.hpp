#pragma once

// Geometry assembly: tagged nodes become points, tagged ways polylines or polygons,
// multipolygon/boundary relations polygons with holes.

#include <algorithm>
#include <optional>
#include <variant>
#include <vector>

#include "cartoprompt/geo.hpp"
#include "cartoprompt/osm/graph.hpp"

namespace cartoprompt::osm {

using geo::LatLon;
using PointGeom = LatLon;
using PolylineGeom = geo::Polyline<LatLon>;
using PolygonGeom = geo::Polygon<LatLon>;
using Geometry = std::variant<PointGeom, PolylineGeom, PolygonGeom>;

struct LatLonBox {
  double min_lat = 90, min_lon = 180, max_lat = -90, max_lon = -180;

  void extend(const LatLon& p) {
    min_lat = std::min(min_lat, p.lat);
    max_lat = std::max(max_lat, p.lat);
    min_lon = std::min(min_lon, p.lon);
    max_lon = std::max(max_lon, p.lon);
  }
  void extend(const LatLonBox& o) {
    if (o.empty()) return;
    extend(LatLon{o.min_lat, o.min_lon});
    extend(LatLon{o.max_lat, o.max_lon});
  }
  bool empty() const { return min_lat > max_lat; }
  bool contains(const LatLon& p) const {
    return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
  }
  bool intersects(const LatLonBox& o) const {
    return !(o.min_lat > max_lat || o.max_lat < min_lat || o.min_lon > max_lon || o.max_lon < min_lon);
  }

  friend bool operator==(const LatLonBox&, const LatLonBox&) = default;
};

struct Feature {
  Geometry geometry;
  Tags tags;
  ElementKind source_kind = ElementKind::node;
  ElementId source_id = 0;

  bool is_point() const { return std::holds_alternative<PointGeom>(geometry); }
  bool is_polyline() const { return std::holds_alternative<PolylineGeom>(geometry); }
  bool is_polygon() const { return std::holds_alternative<PolygonGeom>(geometry); }

  const std::string* tag(const std::string& key) const {
    auto it = tags.find(key);
    return it == tags.end() ? nullptr : &it->second;
  }

  LatLonBox bbox() const {
    LatLonBox b;
    std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, PointGeom>) b.extend(g);
          else if constexpr (std::is_same_v<G, PolylineGeom>) for (const auto& p : g) b.extend(p);
          else for (const auto& p : g.outer) b.extend(p);
        },
        geometry);
    return b;
  }

  friend bool operator==(const Feature&, const Feature&) = default;
};

struct FeatureSet {
  std::vector<Feature> features;
  std::vector<Reject> rejects;

  LatLonBox bbox() const {
    LatLonBox b;
    for (const auto& f : features) b.extend(f.bbox());
    return b;
  }
};

// Node or vertex-average centroid; the closing vertex of a ring is not double counted.
inline LatLon representative_point(const Feature& f) {
  auto average = [](const std::vector<LatLon>& pts, bool closed) {
    const std::size_t n = closed && pts.size() > 1 ? pts.size() - 1 : pts.size();
    double lat = 0, lon = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lat += pts[i].lat;
      lon += pts[i].lon;
    }
    return LatLon{lat / static_cast<double>(n), lon / static_cast<double>(n)};
  };
  return std::visit(
      [&](const auto& g) -> LatLon {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, PointGeom>) return g;
        else if constexpr (std::is_same_v<G, PolylineGeom>) return average(g, g.size() > 2 && g.front() == g.back());
        else return average(g.outer, true);
      },
      f.geometry);
}

inline bool implies_area(const Tags& tags) {
  if (auto it = tags.find("area"); it != tags.end()) {
    if (it->second == "yes") return true;
    if (it->second == "no") return false;
  }
  return tags.contains("building") || tags.contains("landuse") || tags.contains("leisure") || tags.contains("amenity");
}

inline bool is_area_relation(const Tags& tags) {
  auto type = tags.find("type");
  if (type != tags.end() && type->second == "multipolygon") return true;
  auto boundary = tags.find("boundary");
  return boundary != tags.end() && boundary->second == "administrative";
}

namespace detail {

// Chains way node lists into closed rings by matching endpoints. Returns nullopt when
// some chain cannot be closed.
inline std::optional<std::vector<std::vector<ElementId>>> chain_rings(std::vector<std::vector<ElementId>> parts) {
  std::vector<std::vector<ElementId>> rings;
  std::vector<bool> used(parts.size(), false);
  for (std::size_t start = 0; start < parts.size(); ++start) {
    if (used[start]) continue;
    used[start] = true;
    std::vector<ElementId> ring = parts[start];
    while (ring.size() < 2 || ring.front() != ring.back()) {
      bool extended = false;
      for (std::size_t j = 0; j < parts.size() && !extended; ++j) {
        if (used[j] || parts[j].empty()) continue;
        const auto& p = parts[j];
        if (p.front() == ring.back()) {
          ring.insert(ring.end(), p.begin() + 1, p.end());
          extended = true;
        } else if (p.back() == ring.back()) {
          ring.insert(ring.end(), p.rbegin() + 1, p.rend());
          extended = true;
        }
        if (extended) used[j] = true;
      }
      if (!extended) return std::nullopt;
    }
    if (ring.size() < 4) return std::nullopt;
    rings.push_back(std::move(ring));
  }
  return rings;
}

inline geo::Ring<LatLon> to_coords(const OsmGraph& g, const std::vector<ElementId>& refs) {
  geo::Ring<LatLon> out;
  out.reserve(refs.size());
  for (ElementId r : refs) {
    const Node& n = g.nodes.at(r);
    out.push_back({n.lat, n.lon});
  }
  return out;
}

inline bool ring_in_box(const geo::Ring<LatLon>& ring, const LatLonBox& box) {
  return std::all_of(ring.begin(), ring.end(), [&](const LatLon& p) { return box.contains(p); });
}

inline void assemble_relation(const OsmGraph& g, ElementId id, const Relation& rel, FeatureSet& out) {
  std::vector<std::vector<ElementId>> outer_parts, inner_parts;
  Tags merged;
  for (const auto& m : rel.members) {
    if (m.type != ElementKind::way) continue;
    const bool outer = m.role.empty() || m.role == "outer";
    const bool inner = m.role == "inner";
    if (!outer && !inner) continue;
    auto it = g.ways.find(m.ref);
    if (it == g.ways.end() || it->second.incomplete || it->second.refs.size() < 2) {
      out.rejects.push_back({"relation", id, "member way " + std::to_string(m.ref) + " missing or incomplete"});
      return;
    }
    (outer ? outer_parts : inner_parts).push_back(it->second.refs);
    if (outer)
      for (const auto& [k, v] : it->second.tags) merged.emplace(k, v);
  }
  for (const auto& [k, v] : rel.tags) merged[k] = v;
  if (outer_parts.empty()) {
    out.rejects.push_back({"relation", id, "no outer ring"});
    return;
  }
  auto outers = chain_rings(std::move(outer_parts));
  auto inners = chain_rings(std::move(inner_parts));
  if (!outers || !inners) {
    out.rejects.push_back({"relation", id, "unclosable ring chain"});
    return;
  }

  std::vector<PolygonGeom> polys;
  for (const auto& r : *outers) polys.push_back({to_coords(g, r), {}});
  auto lat = [](const LatLon& p) { return p.lat; };
  auto lon = [](const LatLon& p) { return p.lon; };
  for (const auto& r : *inners) {
    auto hole = to_coords(g, r);
    bool placed = false;
    for (auto& poly : polys) {
      LatLonBox box;
      for (const auto& p : poly.outer) box.extend(p);
      if (ring_in_box(hole, box) && geo::point_in_ring(poly.outer, hole.front().lon, hole.front().lat, lon, lat)) {
        poly.holes.push_back(std::move(hole));
        placed = true;
        break;
      }
    }
    if (!placed) out.rejects.push_back({"relation", id, "inner ring outside every outer ring; dropped"});
  }
  for (auto& poly : polys) out.features.push_back({std::move(poly), merged, ElementKind::relation, id});
}

}  // namespace detail

inline FeatureSet assemble_features(const OsmGraph& g) {
  FeatureSet out;
  for (const auto& [id, n] : g.nodes)
    if (!n.tags.empty()) out.features.push_back({LatLon{n.lat, n.lon}, n.tags, ElementKind::node, id});

  for (const auto& [id, w] : g.ways) {
    if (w.tags.empty()) continue;
    if (w.incomplete) {
      out.rejects.push_back({"way", id, "references missing nodes"});
      continue;
    }
    if (w.refs.size() < 2) {
      out.rejects.push_back({"way", id, "fewer than 2 nodes"});
      continue;
    }
    auto coords = detail::to_coords(g, w.refs);
    if (w.closed() && implies_area(w.tags))
      out.features.push_back({PolygonGeom{std::move(coords), {}}, w.tags, ElementKind::way, id});
    else
      out.features.push_back({std::move(coords), w.tags, ElementKind::way, id});
  }

  for (const auto& [id, rel] : g.relations)
    if (is_area_relation(rel.tags)) detail::assemble_relation(g, id, rel, out);
  return out;
}

}  // namespace cartoprompt::osm
