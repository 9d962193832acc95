#pragma once

// Feature store: the assembled features of one or more OSM sources, saved as a
// versioned JSON snapshot so the service starts without re-parsing raw data.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cartoprompt/errors.hpp"
#include "cartoprompt/osm/assemble.hpp"
#include "cartoprompt/osm/overpass.hpp"
#include "cartoprompt/osm/xml.hpp"

namespace cartoprompt::service {

inline constexpr const char* kStoreFormat = "cartoprompt-store";
inline constexpr int kStoreVersion = 1;

struct FeatureStore {
  osm::FeatureSet features;
  osm::LatLonBox bbox;
  std::vector<std::string> sources;

  bool covers(const geo::LatLon& p) const { return !bbox.empty() && bbox.contains(p); }
};

struct IngestSources {
  std::vector<std::string> osm_files;       // OSM XML
  std::vector<std::string> overpass_files;  // saved Overpass JSON responses

  bool empty() const { return osm_files.empty() && overpass_files.empty(); }
};

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// First occurrence of an element id wins; overlapping extracts usually repeat elements verbatim.
inline void merge_into(osm::OsmGraph& dst, osm::OsmGraph&& src) {
  dst.nodes.merge(src.nodes);
  dst.ways.merge(src.ways);
  dst.relations.merge(src.relations);
  dst.rejects.insert(dst.rejects.end(), src.rejects.begin(), src.rejects.end());
  dst.skipped_unknown += src.skipped_unknown;
}

inline nlohmann::json coords_json(const std::vector<geo::LatLon>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : pts) a.push_back({p.lat, p.lon});
  return a;
}

inline std::vector<geo::LatLon> coords_from(const nlohmann::json& a) {
  std::vector<geo::LatLon> out;
  out.reserve(a.size());
  for (const auto& p : a) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

inline osm::ElementKind kind_from(const std::string& s) {
  if (s == "node") return osm::ElementKind::node;
  if (s == "way") return osm::ElementKind::way;
  if (s == "relation") return osm::ElementKind::relation;
  throw FormatError("unknown element kind '" + s + "'");
}

}  // namespace detail

inline FeatureStore make_store(osm::FeatureSet fs, std::vector<std::string> sources = {}) {
  FeatureStore s;
  s.bbox = fs.bbox();
  s.features = std::move(fs);
  s.sources = std::move(sources);
  return s;
}

inline FeatureStore ingest(const IngestSources& src) {
  if (src.empty()) throw ConfigError("no data sources given");
  osm::OsmGraph g;
  std::vector<std::string> names;
  for (const auto& p : src.osm_files) {
    detail::merge_into(g, osm::parse_osm_xml(detail::slurp(p)));
    names.push_back(p);
  }
  for (const auto& p : src.overpass_files) {
    detail::merge_into(g, osm::parse_overpass_json(detail::slurp(p)));
    names.push_back(p);
  }
  g.resolve();
  auto fs = osm::assemble_features(g);
  fs.rejects.insert(fs.rejects.begin(), g.rejects.begin(), g.rejects.end());
  return make_store(std::move(fs), std::move(names));
}

inline nlohmann::json store_to_json(const FeatureStore& s) {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : s.features.features) {
    nlohmann::json j{{"kind", osm::to_string(f.source_kind)}, {"id", f.source_id}, {"tags", f.tags}};
    if (const auto* p = std::get_if<osm::PointGeom>(&f.geometry)) {
      j["point"] = {p->lat, p->lon};
    } else if (const auto* l = std::get_if<osm::PolylineGeom>(&f.geometry)) {
      j["line"] = detail::coords_json(*l);
    } else {
      const auto& poly = std::get<osm::PolygonGeom>(f.geometry);
      nlohmann::json holes = nlohmann::json::array();
      for (const auto& h : poly.holes) holes.push_back(detail::coords_json(h));
      j["polygon"] = {{"outer", detail::coords_json(poly.outer)}, {"holes", holes}};
    }
    feats.push_back(std::move(j));
  }
  nlohmann::json rejects = nlohmann::json::array();
  for (const auto& r : s.features.rejects) rejects.push_back(r.to_json());
  nlohmann::json j{{"format", kStoreFormat}, {"version", kStoreVersion}, {"sources", s.sources},
                   {"features", feats},      {"rejects", rejects}};
  if (!s.bbox.empty()) j["bbox"] = {s.bbox.min_lat, s.bbox.min_lon, s.bbox.max_lat, s.bbox.max_lon};
  return j;
}

inline FeatureStore store_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kStoreFormat) throw FormatError("not a feature store snapshot");
    if (j.at("version").get<int>() != kStoreVersion)
      throw FormatError("unsupported store version " + std::to_string(j.at("version").get<int>()));
    osm::FeatureSet fs;
    for (const auto& f : j.at("features")) {
      osm::Feature feat;
      feat.source_kind = detail::kind_from(f.at("kind").get<std::string>());
      feat.source_id = f.at("id").get<osm::ElementId>();
      feat.tags = f.at("tags").get<osm::Tags>();
      if (f.contains("point")) {
        feat.geometry = geo::LatLon{f["point"].at(0).get<double>(), f["point"].at(1).get<double>()};
      } else if (f.contains("line")) {
        feat.geometry = detail::coords_from(f["line"]);
      } else {
        osm::PolygonGeom poly;
        poly.outer = detail::coords_from(f.at("polygon").at("outer"));
        for (const auto& h : f["polygon"].at("holes")) poly.holes.push_back(detail::coords_from(h));
        feat.geometry = std::move(poly);
      }
      fs.features.push_back(std::move(feat));
    }
    for (const auto& r : j.value("rejects", nlohmann::json::array()))
      fs.rejects.push_back({r.at("kind").get<std::string>(), r.at("id").get<osm::ElementId>(), r.at("reason").get<std::string>()});
    return make_store(std::move(fs), j.value("sources", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed store snapshot: ") + e.what());
  }
}

inline void save_store(const FeatureStore& s, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << store_to_json(s).dump() << '\n';
}

inline FeatureStore load_store(const std::string& path) {
  const std::string text = detail::slurp(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("store snapshot is not JSON: ") + e.what(), e.byte);
  }
  return store_from_json(j);
}

}  // namespace cartoprompt::service
