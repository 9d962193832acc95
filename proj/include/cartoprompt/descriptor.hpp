#pragma once

// Quantitative description of one circular area: amenity counts, intersecting admin
// units, building count/coverage, landuse/leisure coverage, road and rail lengths.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cartoprompt/errors.hpp"
#include "cartoprompt/geo.hpp"
#include "cartoprompt/osm/assemble.hpp"

namespace cartoprompt {

struct DescriptorConfig {
  double radius_m = 300.0;
  double coverage_threshold = 0.02;
  int province_admin_level = 4;
  int district_admin_level = 6;
  std::string road_key = "highway";
  std::string rail_key = "railway";
  std::set<std::string> landuse_exclusions = {"residential"};
  geo::GeoConfig geo;

  void validate() const {
    if (!(coverage_threshold > 0.0 && coverage_threshold < 1.0))
      throw ConfigError("coverage_threshold must be in (0, 1)");
    if (province_admin_level == district_admin_level) throw ConfigError("admin levels must differ");
    if (!(radius_m > 0.0 && radius_m <= geo::kMaxRadiusM)) throw ConfigError("radius_m must be in (0, 5000]");
    geo.validate();
  }
};

struct CoverageEntry {
  std::string category;  // "landuse" or "leisure"
  std::string value;
  long pct = 0;

  friend bool operator==(const CoverageEntry&, const CoverageEntry&) = default;
};

struct AreaDescriptor {
  geo::LatLon center;
  double radius_m = 0.0;
  std::vector<std::string> provinces;
  std::vector<std::string> districts;
  std::map<std::string, long> amenity_counts;
  long building_count = 0;
  long building_coverage_pct = 0;
  std::vector<CoverageEntry> coverage_entries;
  std::map<std::string, long> road_lengths_m;
  std::map<std::string, long> rail_lengths_m;

  friend bool operator==(const AreaDescriptor&, const AreaDescriptor&) = default;
};

struct Diagnostics {
  std::vector<std::string> warnings;
};

// Half away from zero, as std::lround does.
inline long round_half_away(double v) { return std::lround(v); }

// A circle together with its projected clip polygon and a lat/lon prefilter box.
class StudyArea {
 public:
  StudyArea(const geo::CircleSpec& circle, const geo::GeoConfig& cfg = {})
      : circle_(circle), cfg_(cfg), ngon_(geo::circle_ngon(circle, cfg)) {
    const double m = circle.radius_m * 1.01;
    const auto sw = geo::unproject_local(circle.center, {-m, -m}, cfg.earth_radius_m);
    const auto ne = geo::unproject_local(circle.center, {m, m}, cfg.earth_radius_m);
    box_.extend(sw);
    box_.extend(ne);
  }

  const geo::CircleSpec& circle() const { return circle_; }
  const geo::Ring<geo::XY>& ngon() const { return ngon_; }
  double true_area() const { return circle_.true_area(); }

  bool may_touch(const osm::Feature& f) const { return box_.intersects(f.bbox()); }

  geo::XY project(const geo::LatLon& p) const { return geo::project_local(circle_.center, p, cfg_.earth_radius_m); }

  std::vector<geo::XY> project(const std::vector<geo::LatLon>& pts) const {
    return geo::project_all(pts, [this](const geo::LatLon& p) { return project(p); });
  }

  geo::Polygon<geo::XY> project(const osm::PolygonGeom& poly) const {
    geo::Polygon<geo::XY> out{project(poly.outer), {}};
    for (const auto& h : poly.holes) out.holes.push_back(project(h));
    return out;
  }

  bool contains(const geo::LatLon& p) const { return geo::norm(project(p)) <= circle_.radius_m; }

  double clipped_area(const osm::PolygonGeom& poly) const { return geo::intersection_area(project(poly), ngon_); }

  double clipped_length(const osm::PolylineGeom& line) const {
    return geo::clip_polyline_circle(project(line), circle_.radius_m);
  }

 private:
  geo::CircleSpec circle_;
  geo::GeoConfig cfg_;
  geo::Ring<geo::XY> ngon_;
  osm::LatLonBox box_;
};

namespace detail {

// Sum independent of input order.
inline double stable_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

inline bool has_value(const osm::Feature& f, const std::string& key) {
  const std::string* v = f.tag(key);
  return v && !v->empty() && *v != "no";
}

inline std::optional<int> parse_level(const std::string* s) {
  if (!s) return std::nullopt;
  try {
    std::size_t pos = 0;
    int v = std::stoi(*s, &pos);
    if (pos != s->size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline std::map<std::string, long> count_amenities(const osm::FeatureSet& fs, const StudyArea& area) {
  std::map<std::string, long> counts;
  for (const auto& f : fs.features) {
    const std::string* v = f.tag("amenity");
    if (!v || v->empty() || !area.may_touch(f)) continue;
    if (area.contains(osm::representative_point(f))) ++counts[*v];
  }
  return counts;
}

inline std::map<std::string, long> count_amenities(const osm::FeatureSet& fs, const geo::CircleSpec& circle) {
  return count_amenities(fs, StudyArea(circle));
}

struct AdminNames {
  std::vector<std::string> provinces;
  std::vector<std::string> districts;
};

inline AdminNames intersecting_admin(const osm::FeatureSet& fs, const StudyArea& area, const DescriptorConfig& cfg,
                                     Diagnostics* diag = nullptr) {
  std::set<std::string> provinces, districts;
  for (const auto& f : fs.features) {
    if (!f.is_polygon()) continue;
    const std::string* boundary = f.tag("boundary");
    if (!boundary || *boundary != "administrative") continue;
    const auto level = detail::parse_level(f.tag("admin_level"));
    if (!level || (*level != cfg.province_admin_level && *level != cfg.district_admin_level)) continue;
    if (!area.may_touch(f)) continue;
    if (!(area.clipped_area(std::get<osm::PolygonGeom>(f.geometry)) > 0.0)) continue;
    const std::string* name = f.tag("name");
    if (!name || name->empty()) {
      if (diag)
        diag->warnings.push_back("administrative boundary " + std::to_string(f.source_id) + " has no name; skipped");
      continue;
    }
    (*level == cfg.province_admin_level ? provinces : districts).insert(*name);
  }
  return {{provinces.begin(), provinces.end()}, {districts.begin(), districts.end()}};
}

struct BuildingStats {
  long count = 0;
  long coverage_pct = 0;
};

// Counting goes by representative point; coverage clips every building polygon to the circle.
inline BuildingStats building_stats(const osm::FeatureSet& fs, const StudyArea& area) {
  BuildingStats out;
  std::vector<double> areas;
  for (const auto& f : fs.features) {
    if (!f.is_polygon() || !detail::has_value(f, "building") || !area.may_touch(f)) continue;
    if (area.contains(osm::representative_point(f))) ++out.count;
    const double a = area.clipped_area(std::get<osm::PolygonGeom>(f.geometry));
    if (a > 0.0) areas.push_back(a);
  }
  out.coverage_pct = std::min(100L, round_half_away(100.0 * detail::stable_sum(std::move(areas)) / area.true_area()));
  return out;
}

inline std::vector<CoverageEntry> coverage_percentages(const osm::FeatureSet& fs, const StudyArea& area,
                                                       const DescriptorConfig& cfg) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> parts;
  for (const auto& f : fs.features) {
    if (!f.is_polygon() || !area.may_touch(f)) continue;
    for (const char* key : {"landuse", "leisure"}) {
      const std::string* v = f.tag(key);
      if (!v || v->empty()) continue;
      if (std::string_view(key) == "landuse" && cfg.landuse_exclusions.contains(*v)) continue;
      const double a = area.clipped_area(std::get<osm::PolygonGeom>(f.geometry));
      if (a > 0.0) parts[{key, *v}].push_back(a);
    }
  }
  const long min_pct = round_half_away(100.0 * cfg.coverage_threshold);
  std::vector<CoverageEntry> out;
  for (auto& [key, areas] : parts) {
    const long pct = round_half_away(100.0 * detail::stable_sum(std::move(areas)) / area.true_area());
    if (pct >= min_pct) out.push_back({key.first, key.second, std::min(100L, pct)});
  }
  return out;
}

struct WayLengths {
  std::map<std::string, long> roads;
  std::map<std::string, long> rails;
};

inline WayLengths way_lengths(const osm::FeatureSet& fs, const StudyArea& area, const DescriptorConfig& cfg) {
  std::map<std::string, std::vector<double>> roads, rails;
  for (const auto& f : fs.features) {
    if (!f.is_polyline() || !area.may_touch(f)) continue;
    const std::string* road = f.tag(cfg.road_key);
    const std::string* rail = f.tag(cfg.rail_key);
    if (!road && !rail) continue;
    const double len = area.clipped_length(std::get<osm::PolylineGeom>(f.geometry));
    if (!(len > 0.0)) continue;
    if (road && !road->empty()) roads[*road].push_back(len);
    if (rail && !rail->empty()) rails[*rail].push_back(len);
  }
  auto finish = [](std::map<std::string, std::vector<double>>& in) {
    std::map<std::string, long> out;
    for (auto& [k, v] : in) {
      const long m = round_half_away(detail::stable_sum(std::move(v)));
      if (m > 0) out[k] = m;
    }
    return out;
  };
  return {finish(roads), finish(rails)};
}

inline AdminNames intersecting_admin(const osm::FeatureSet& fs, const geo::CircleSpec& circle,
                                     const DescriptorConfig& cfg, Diagnostics* diag = nullptr) {
  return intersecting_admin(fs, StudyArea(circle, cfg.geo), cfg, diag);
}

inline BuildingStats building_stats(const osm::FeatureSet& fs, const geo::CircleSpec& circle) {
  return building_stats(fs, StudyArea(circle));
}

inline std::vector<CoverageEntry> coverage_percentages(const osm::FeatureSet& fs, const geo::CircleSpec& circle,
                                                       const DescriptorConfig& cfg) {
  return coverage_percentages(fs, StudyArea(circle, cfg.geo), cfg);
}

inline WayLengths way_lengths(const osm::FeatureSet& fs, const geo::CircleSpec& circle, const DescriptorConfig& cfg) {
  return way_lengths(fs, StudyArea(circle, cfg.geo), cfg);
}

inline AreaDescriptor build_descriptor(const osm::FeatureSet& fs, const geo::CircleSpec& circle,
                                       const DescriptorConfig& cfg, Diagnostics* diag = nullptr) {
  cfg.validate();
  const StudyArea area(circle, cfg.geo);
  AreaDescriptor d;
  d.center = circle.center;
  d.radius_m = circle.radius_m;
  auto admin = intersecting_admin(fs, area, cfg, diag);
  d.provinces = std::move(admin.provinces);
  d.districts = std::move(admin.districts);
  d.amenity_counts = count_amenities(fs, area);
  const auto b = building_stats(fs, area);
  d.building_count = b.count;
  d.building_coverage_pct = b.coverage_pct;
  d.coverage_entries = coverage_percentages(fs, area, cfg);
  auto lengths = way_lengths(fs, area, cfg);
  d.road_lengths_m = std::move(lengths.roads);
  d.rail_lengths_m = std::move(lengths.rails);
  return d;
}

// Uses cfg.radius_m as the radius.
inline AreaDescriptor build_descriptor(const osm::FeatureSet& fs, const geo::LatLon& center,
                                       const DescriptorConfig& cfg = {}, Diagnostics* diag = nullptr) {
  return build_descriptor(fs, geo::CircleSpec{center, cfg.radius_m}, cfg, diag);
}

inline nlohmann::ordered_json to_json(const AreaDescriptor& d) {
  nlohmann::ordered_json j;
  j["center"] = {{"lat", d.center.lat}, {"lon", d.center.lon}};
  j["radius_m"] = d.radius_m;
  j["provinces"] = d.provinces;
  j["districts"] = d.districts;
  j["amenity_counts"] = d.amenity_counts;
  j["building_count"] = d.building_count;
  j["building_coverage_pct"] = d.building_coverage_pct;
  j["coverage_entries"] = nlohmann::ordered_json::array();
  for (const auto& e : d.coverage_entries)
    j["coverage_entries"].push_back({{"category", e.category}, {"value", e.value}, {"pct", e.pct}});
  j["road_lengths_m"] = d.road_lengths_m;
  j["rail_lengths_m"] = d.rail_lengths_m;
  return j;
}

inline AreaDescriptor descriptor_from_json(const nlohmann::json& j) {
  try {
    AreaDescriptor d;
    d.center = {j.at("center").at("lat").get<double>(), j.at("center").at("lon").get<double>()};
    d.radius_m = j.at("radius_m").get<double>();
    d.provinces = j.at("provinces").get<std::vector<std::string>>();
    d.districts = j.at("districts").get<std::vector<std::string>>();
    d.amenity_counts = j.at("amenity_counts").get<std::map<std::string, long>>();
    d.building_count = j.at("building_count").get<long>();
    d.building_coverage_pct = j.at("building_coverage_pct").get<long>();
    for (const auto& e : j.at("coverage_entries"))
      d.coverage_entries.push_back({e.at("category"), e.at("value"), e.at("pct").get<long>()});
    d.road_lengths_m = j.at("road_lengths_m").get<std::map<std::string, long>>();
    d.rail_lengths_m = j.at("rail_lengths_m").get<std::map<std::string, long>>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid descriptor JSON: ") + e.what());
  }
}

}  // namespace cartoprompt
