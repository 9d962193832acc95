#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"

#include "cartoprompt/errors.hpp"
#include "cartoprompt/geo.hpp"
#include "cartoprompt/http.hpp"
#include "cartoprompt/osm/graph.hpp"

namespace cartoprompt::osm {

namespace detail {

inline Tags json_tags(const nlohmann::json& el) {
  Tags tags;
  if (auto it = el.find("tags"); it != el.end() && it->is_object())
    for (const auto& [k, v] : it->items())
      if (v.is_string()) tags[k] = v.get<std::string>();
  return tags;
}

}  // namespace detail

// Parses an Overpass API `[out:json]` response.
inline OsmGraph parse_overpass_json(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("elements") || !doc["elements"].is_array())
    throw FormatError("Overpass response has no \"elements\" array");

  OsmGraph g;
  try {
    for (const auto& el : doc["elements"]) {
      const std::string type = el.value("type", "");
      if (!el.contains("id") || !el["id"].is_number_integer()) {
        if (type == "node" || type == "way" || type == "relation") g.rejects.push_back({type, 0, "missing or invalid id"});
        else ++g.skipped_unknown;
        continue;
      }
      const ElementId id = el["id"].get<ElementId>();
      bool inserted = true;
      if (type == "node") {
        if (!el.contains("lat") || !el.contains("lon") || !el["lat"].is_number() || !el["lon"].is_number()) {
          g.rejects.push_back({type, id, "missing lat/lon"});
          continue;
        }
        const double lat = el["lat"].get<double>(), lon = el["lon"].get<double>();
        if (!valid_lat_lon(lat, lon)) {
          g.rejects.push_back({type, id, "lat/lon out of range"});
          continue;
        }
        inserted = g.nodes.emplace(id, Node{lat, lon, detail::json_tags(el)}).second;
      } else if (type == "way") {
        Way w;
        if (auto it = el.find("nodes"); it != el.end() && it->is_array())
          for (const auto& r : *it) w.refs.push_back(r.get<ElementId>());
        w.tags = detail::json_tags(el);
        inserted = g.ways.emplace(id, std::move(w)).second;
      } else if (type == "relation") {
        Relation rel;
        bool bad = false;
        if (auto it = el.find("members"); it != el.end() && it->is_array()) {
          for (const auto& m : *it) {
            const std::string mt = m.value("type", "");
            ElementKind kind;
            if (mt == "node") kind = ElementKind::node;
            else if (mt == "way") kind = ElementKind::way;
            else if (mt == "relation") kind = ElementKind::relation;
            else {
              bad = true;
              break;
            }
            if (!m.contains("ref") || !m["ref"].is_number_integer()) {
              bad = true;
              break;
            }
            rel.members.push_back({kind, m["ref"].get<ElementId>(), m.value("role", "")});
          }
        }
        if (bad) {
          g.rejects.push_back({type, id, "member without a valid type/ref"});
          continue;
        }
        rel.tags = detail::json_tags(el);
        inserted = g.relations.emplace(id, std::move(rel)).second;
      } else {
        ++g.skipped_unknown;
        continue;
      }
      if (!inserted) g.rejects.push_back({type, id, "duplicate id"});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("unexpected value in Overpass element: ") + e.what());
  }
  g.resolve();
  return g;
}

// Overpass QL for everything (with recursion down to nodes) inside a square of
// `half_size_m` around `center`.
inline std::string overpass_bbox_query(const geo::LatLon& center, double half_size_m, int timeout_s = 60) {
  const geo::LatLon sw = geo::unproject_local(center, {-half_size_m, -half_size_m});
  const geo::LatLon ne = geo::unproject_local(center, {half_size_m, half_size_m});
  char bbox[128];
  std::snprintf(bbox, sizeof bbox, "%.7f,%.7f,%.7f,%.7f", sw.lat, sw.lon, ne.lat, ne.lon);
  return "[out:json][timeout:" + std::to_string(timeout_s) + "];(nwr(" + bbox + ");<;);(._;>;);out body;";
}

// POSTs `query` to an Overpass interpreter endpoint and returns the raw body.
inline std::string fetch_overpass(const std::string& query, const std::string& endpoint,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(180)) {
  http::RequestOptions opts;
  opts.timeout = timeout;
  const auto res = http::post(endpoint, "data=" + httplib::detail::encode_query_param(query),
                              "application/x-www-form-urlencoded", opts);
  if (res.status != 200) throw TransportError("Overpass endpoint returned an error", res.status);
  return res.body;
}

}  // namespace cartoprompt::osm
